#pragma once

#include "patchgen/nn/ops.hpp"
#include "patchgen/nn/parameter_store.hpp"

#include <random>
#include <string>
#include <vector>

namespace patchgen::nn {

/// x W + b, row-wise.
Var dense(const Var& x, const Var& w, const Var& b);

/// Fully connected layer; parameters `<name>.w` (in x out) and `<name>.b` (1 x out).
class Dense {
 public:
  Dense(std::string name, Eigen::Index in, Eigen::Index out);

  void init(ParameterStore& store, std::mt19937_64& rng) const;
  Var forward(Tape& tape, ParameterStore& store, const Var& x) const;

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }
  std::size_t param_count() const { return static_cast<std::size_t>((in_ + 1) * out_); }

 private:
  std::string name_;
  Eigen::Index in_;
  Eigen::Index out_;
};

/// Chain of Dense layers with ReLU between them and optionally after the last.
class Mlp {
 public:
  Mlp(const std::string& name, const std::vector<Eigen::Index>& widths, bool relu_last);

  void init(ParameterStore& store, std::mt19937_64& rng) const;
  Var forward(Tape& tape, ParameterStore& store, Var x) const;
  std::size_t param_count() const;
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
  bool relu_last_;
};

struct AttentionConfig {
  Eigen::Index heads = 4;
  Eigen::Index d_model = 128;
  /// Total query/key width across heads (0 means d_model). d_q always equals d_k.
  Eigen::Index d_k = 0;
  /// Total value width across heads (0 means d_model).
  Eigen::Index d_v = 0;
  Eigen::Index ffn_multiplier = 4;

  Eigen::Index key_width() const { return d_k > 0 ? d_k : d_model; }
  Eigen::Index value_width() const { return d_v > 0 ? d_v : d_model; }
  /// Throws ConfigError unless every width is positive and divisible by heads.
  void validate() const;
};

enum class TokenMixing {
  /// Tokens are the points of one patch.
  pointwise,
  /// Tokens are the patches of one cloud: pooled patch descriptors form queries
  /// and keys; per-point values are mixed across index-aligned points.
  patchwise,
};

/// Captured descriptor projections of a patchwise layer (for inspection).
struct PatchAttentionProbe {
  Matrix queries;
  Matrix keys;
  Eigen::Index patches = 0;
  Eigen::Index heads = 0;

  /// patches x patches attention probabilities for one cloud and head.
  Matrix weights(Eigen::Index cloud, Eigen::Index head) const;
};

/// Pre-norm encoder layer: h += MHA(LN(h)); h += FFN(LN(h)). Linear input and
/// output projections are added when d_in or d_out differ from d_model. No
/// positional encoding is used, so the layer is equivariant to token order.
class TransformerLayer {
 public:
  TransformerLayer(std::string name, Eigen::Index d_in, Eigen::Index d_out, AttentionConfig cfg,
                   TokenMixing mixing = TokenMixing::pointwise);

  void init(ParameterStore& store, std::mt19937_64& rng) const;

  /// `x` stacks (clouds * patches * points) rows in cloud-, patch-, point-major
  /// order. Pointwise layers attend within each run of `points` rows;
  /// patchwise layers attend across the `patches` patches of each cloud.
  Var forward(Tape& tape, ParameterStore& store, const Var& x, Eigen::Index points, Eigen::Index patches = 1,
              PatchAttentionProbe* probe = nullptr) const;

  std::size_t param_count() const;
  Eigen::Index d_in() const { return d_in_; }
  Eigen::Index d_out() const { return d_out_; }
  const AttentionConfig& config() const { return cfg_; }
  TokenMixing mixing() const { return mixing_; }

 private:
  std::string name_;
  Eigen::Index d_in_;
  Eigen::Index d_out_;
  AttentionConfig cfg_;
  TokenMixing mixing_;
};

/// Single-sequence convenience wrapper: all rows of `tokens` form one sequence.
Var transformer_layer(Tape& tape, ParameterStore& store, const TransformerLayer& layer, const Var& tokens);

}  // namespace patchgen::nn
