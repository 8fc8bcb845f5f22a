#pragma once

#include "patchgen/train/config.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace patchgen::train {

/// Encoder, generator and critic with their parameters. The encoder and the
/// generator share one store (updated together); the critic owns another.
struct Networks {
  explicit Networks(const TrainConfig& cfg);

  /// Fresh initialization from one seed.
  void init(std::uint64_t seed);

  model::Encoder encoder;
  model::Generator generator;
  model::Discriminator critic;
  nn::ParameterStore gen_store;
  nn::ParameterStore critic_store;
};

/// Decoded cloud plus its patch-id sideband.
struct Snapshot {
  PointCloud cloud;
  std::vector<std::uint16_t> patch_ids;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One pass over the dataset: a critic step, then a generator/encoder step per
  /// batch. Returns batch-averaged terms. Throws NumericError naming the first
  /// non-finite term.
  losses::LossReport train_epoch(const Dataset& data);

  /// Completed epochs.
  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }
  Networks& networks() { return nets_; }
  const Networks& networks() const { return nets_; }

  /// Fixed latent code used for snapshots, derived from the seed.
  const model::LatentCode& probe_code() const { return probe_; }
  Snapshot probe_snapshot() const;

  /// Adopts the epoch count, snapshot list and checkpoint interval of `cfg`.
  /// Throws ConfigError if any other setting differs from the trainer's.
  void adopt_schedule(const TrainConfig& cfg);

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path);

 private:
  losses::LossTerms train_batch(const Points& real, std::size_t clouds, std::size_t batch_index);

  TrainConfig cfg_;
  mutable Networks nets_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  model::LatentCode probe_;
};

/// Decodes `code` with the generator's current parameters.
Snapshot decode_snapshot(const Networks& nets, const model::LatentCode& code);

/// Builds the training set described by cfg.data (normalized, cfg.generator.points each).
Dataset load_dataset(const TrainConfig& cfg);

std::string checkpoint_name(int epoch);
std::string snapshot_name(int epoch);

/// Full run: writes config.json, losses.csv, snapshots/, checkpoints/, probe_z.pgem.
/// With `resume`, continues from that checkpoint's epoch.
void run_training(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Writes snapshots/epoch_%04d.{pcpf,pid} under `run_dir`; returns the cloud path.
std::filesystem::path write_snapshot(const std::filesystem::path& run_dir, int epoch, const Snapshot& snap);

}  // namespace patchgen::train
