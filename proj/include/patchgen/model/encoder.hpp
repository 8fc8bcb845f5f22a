#pragma once

#include "patchgen/core/point_cloud.hpp"
#include "patchgen/nn/layers.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace patchgen::model {

using nn::Matrix;
using nn::ParameterStore;
using nn::Tape;
using nn::Var;

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct PosteriorParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

struct LatentCode {
  enum class Origin { posterior, prior };
  Eigen::VectorXd z;
  Origin origin = Origin::prior;
};

struct EncoderConfig {
  /// Pointwise MLP widths after the 3D input; the last is the pooled feature size.
  std::vector<Eigen::Index> widths{128, 256, 512, 1024};
  Eigen::Index latent_dim = 128;
};

/// PointNet-style posterior network: shared pointwise MLP with ReLU, max-pool
/// over points, then parallel dense heads for mu and logvar.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg, std::string prefix = "enc");

  void init(ParameterStore& store, std::mt19937_64& rng) const;

  struct Output {
    Var mu;      ///< clouds x latent_dim
    Var logvar;  ///< clouds x latent_dim, clamped to [kLogvarMin, kLogvarMax]
  };

  /// `points` stacks clouds of `n` points each.
  Output forward(Tape& tape, ParameterStore& store, const Var& points, Eigen::Index n) const;

  PosteriorParams encode(const PointCloud& cloud, ParameterStore& store) const;

  const EncoderConfig& config() const { return cfg_; }
  std::size_t param_count() const;

 private:
  EncoderConfig cfg_;
  std::string prefix_;
  nn::Mlp backbone_;
  nn::Dense mu_head_;
  nn::Dense logvar_head_;
};

/// rows x cols of independent N(0, 1) draws, consumed row by row.
Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// z = mu + exp(logvar / 2) * eps, differentiable in mu and logvar.
Var reparameterize(const Var& mu, const Var& logvar, const Matrix& eps);

LatentCode reparameterize(const PosteriorParams& post, std::uint64_t seed);
LatentCode reparameterize(const PosteriorParams& post, const Eigen::VectorXd& eps);

LatentCode sample_prior(Eigen::Index latent_dim, std::uint64_t seed);

}  // namespace patchgen::model
