#pragma once

#include "patchgen/model/encoder.hpp"

#include <vector>

namespace patchgen::model {

inline constexpr double kLogitClamp = 15.0;

struct DiscriminatorConfig {
  /// Pointwise backbone widths after the 3D input; the last is the size of F_D.
  std::vector<Eigen::Index> widths{64, 128, 256, 1024};
  Eigen::Index head_hidden = 256;
  Eigen::Index contrast_dim = 256;

  Eigen::Index feature_dim() const { return widths.empty() ? 0 : widths.back(); }
};

struct CriticOutput {
  double prob_real = 0.5;
  Eigen::VectorXd feature;         ///< pooled backbone feature F_D
  Eigen::VectorXd contrast_embed;  ///< unit-norm contrastive embedding
};

/// Critic: shared pointwise MLP, max-pool into F_D, then a discriminative head
/// (clamped logit) and an L2-normalized contrastive head.
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg, std::string prefix = "dis");

  void init(ParameterStore& store, std::mt19937_64& rng) const;

  struct Output {
    Var logit;    ///< clouds x 1, clamped to [-kLogitClamp, kLogitClamp]
    Var feature;  ///< clouds x feature_dim
    Var embed;    ///< clouds x contrast_dim, unit rows
  };

  /// `points` stacks clouds of `n` points each.
  Output forward(Tape& tape, ParameterStore& store, const Var& points, Eigen::Index n) const;
  /// Backbone and max-pool only.
  Var features(Tape& tape, ParameterStore& store, const Var& points, Eigen::Index n) const;

  CriticOutput criticize(const PointCloud& cloud, ParameterStore& store) const;
  /// F_D of one cloud, for downstream linear probes.
  Eigen::VectorXd extract_embedding(const PointCloud& cloud, ParameterStore& store) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  std::size_t param_count() const;

 private:
  DiscriminatorConfig cfg_;
  std::string prefix_;
  nn::Mlp backbone_;
  nn::Mlp head_;
  nn::Dense contrast_;
};

double sigmoid(double x);

}  // namespace patchgen::model
