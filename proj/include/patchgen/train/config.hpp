#pragma once

#include "patchgen/core/sampling.hpp"
#include "patchgen/losses/losses.hpp"
#include "patchgen/model/discriminator.hpp"
#include "patchgen/model/generators.hpp"
#include "patchgen/train/adam.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace patchgen::train {

enum class TrainMode { vae_gan, gan_only };

TrainMode parse_mode(std::string_view name);
std::string_view mode_name(TrainMode mode);

/// Where training clouds come from: a directory of cloud files or synthetic shapes.
struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" or "dir"
  std::filesystem::path path;
  std::vector<std::string> shapes{"sphere", "cube", "cylinder", "two-box-chair"};
  std::size_t count = 64;
  std::uint64_t seed = 1;
};

struct TrainConfig {
  model::GeneratorConfig generator;
  model::EncoderConfig encoder;
  model::DiscriminatorConfig discriminator;
  AdamConfig optimizer;
  losses::LossWeights weights;
  AugmentConfig augmentation;
  DataConfig data;
  TrainMode mode = TrainMode::vae_gan;
  std::size_t batch_size = 32;
  int epochs = 200;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::vector<int> snapshot_epochs{1, 10, 50, 200};
  /// Save a checkpoint every this many epochs (0: only after the final epoch).
  int checkpoint_every = 0;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Strict parse: unknown keys and wrong types raise ConfigError naming the key.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace patchgen::train
