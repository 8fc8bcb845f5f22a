#pragma once

#include "patchgen/model/encoder.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace patchgen::model {

enum class GeneratorKind { mlp, point_trans, dual_trans };

GeneratorKind parse_generator_kind(std::string_view name);
std::string_view generator_kind_name(GeneratorKind kind);

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::mlp;
  Eigen::Index patches = 8;
  Eigen::Index points = 2048;
  Eigen::Index latent_dim = 128;

  /// MLP-G hidden widths; input is latent_dim + 2 and a final 3 is appended.
  std::vector<Eigen::Index> mlp_widths{128, 64, 32};

  /// PointTrans-G: one dense layer into each stage width, followed by
  /// `point_trans_depth` pointwise transformer layers at that width.
  std::vector<Eigen::Index> point_trans_widths{128, 64};
  Eigen::Index point_trans_depth = 2;
  Eigen::Index point_heads = 4;

  /// DualTrans-G: `dual_pairs` interleaved pointwise/patchwise layers of width dual_model_dim.
  Eigen::Index dual_model_dim = 1024;
  Eigen::Index dual_pairs = 4;
  Eigen::Index dual_point_heads = 8;
  Eigen::Index patch_heads = 8;

  Eigen::Index ffn_multiplier = 4;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Equal split when divisible; otherwise the first N mod k patches get one extra point.
  std::vector<Eigen::Index> patch_sizes() const;
  Eigen::Index input_width() const { return latent_dim + 2; }
};

/// Per-component parameter totals of one generator instance.
struct GeneratorParamCounts {
  std::size_t priors = 0;
  std::size_t per_patch_total = 0;  ///< sum over per-patch modules (MLP-G / PointTrans-G)
  std::size_t per_patch_each = 0;   ///< one per-patch module (0 for DualTrans-G)
  std::size_t shared = 0;           ///< modules shared by all patches (DualTrans-G)
  std::size_t total() const { return priors + per_patch_total + shared; }
};

/// Row j of the result is concat(z_b, prior_j) for cloud b: (B * T) x (d_z + 2).
Var expand_input(const Var& z, const Var& prior);

/// Decoder: k learnable 2D patch priors deformed into 3D patches whose union is
/// the output cloud. Output rows are cloud-major, patch-major within a cloud.
class Generator {
 public:
  explicit Generator(GeneratorConfig cfg, std::string prefix = "gen");

  void init(ParameterStore& store, std::mt19937_64& rng) const;

  /// `z` is clouds x latent_dim; returns (clouds * N) x 3. The optional probe
  /// receives the first patchwise layer's descriptors (DualTrans-G only).
  Var forward(Tape& tape, ParameterStore& store, const Var& z, nn::PatchAttentionProbe* probe = nullptr) const;

  PointCloud decode(const LatentCode& code, ParameterStore& store) const;

  /// Patch index of every output point, in output order.
  std::vector<std::uint16_t> patch_ids() const;
  std::string prior_name(Eigen::Index patch) const;

  const GeneratorConfig& config() const { return cfg_; }
  GeneratorParamCounts param_counts() const;

 private:
  Var forward_per_patch(Tape& tape, ParameterStore& store, const Var& z) const;
  Var forward_dual(Tape& tape, ParameterStore& store, const Var& z, nn::PatchAttentionProbe* probe) const;
  Var run_patch_module(Tape& tape, ParameterStore& store, Eigen::Index patch, Var x, Eigen::Index points) const;

  GeneratorConfig cfg_;
  std::string prefix_;
  std::vector<Eigen::Index> sizes_;
  // Per-patch modules, in patch order (MLP-G and PointTrans-G).
  std::vector<nn::Mlp> mlp_modules_;
  struct PointTransStage {
    nn::Dense dense;
    std::vector<nn::TransformerLayer> layers;
  };
  std::vector<std::vector<PointTransStage>> point_trans_modules_;
  std::vector<nn::Dense> point_trans_heads_;
  // DualTrans-G layers, alternating pointwise / patchwise.
  std::vector<nn::TransformerLayer> dual_layers_;
};

}  // namespace patchgen::model
