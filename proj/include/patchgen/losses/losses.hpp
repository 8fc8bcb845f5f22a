#pragma once

#include "patchgen/core/sampling.hpp"
#include "patchgen/model/discriminator.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace patchgen::losses {

using nn::Matrix;
using nn::Var;

/// Squared-distance Chamfer with per-cloud means, averaged over the batch.
/// `x` and `y` stack clouds of `nx` and `ny` points; both hold the same cloud count.
Var chamfer(const Var& x, const Var& y, Eigen::Index nx, Eigen::Index ny);
double chamfer(const PointCloud& x, const PointCloud& y);
/// Chamfer between two raw point blocks (no autodiff).
double chamfer_value(const Points& x, const Points& y);

/// 0.5 * sum_d (mu^2 + exp(logvar) - logvar - 1), averaged over rows.
Var kl_gaussian(const Var& mu, const Var& logvar);
double kl_gaussian(const model::PosteriorParams& post);

/// Squared L2 distance between feature rows, averaged over rows.
Var feature_recon(const Var& f_real, const Var& f_fake);

struct GanLosses {
  Var critic;
  Var generator;
};

/// Critic minimizes -[log D(x) + log(1 - D(x_rec)) + log(1 - D(x_gen))] (batch means);
/// the generator uses the non-saturating -log D(x_rec) - log D(x_gen). Inputs are clamped logits.
GanLosses gan_losses_vaegan(const Var& logit_real, const Var& logit_rec, const Var& logit_gen);
/// Same without the reconstruction term.
GanLosses gan_loss_plain(const Var& logit_real, const Var& logit_gen);

/// InfoNCE over a batch: anchor i is paired with positive i, and every other
/// anchor j is a negative. Rows must be unit-norm embeddings.
Var contrastive(const Var& anchors, const Var& positives, double temperature = 1.0);

/// Applies an independent rotation-plus-jitter draw to each cloud of `n`
/// points, differentiably in `x`. Draws consume `rng` cloud by cloud.
Var augment_batch(const Var& x, Eigen::Index n, std::mt19937_64& rng, const AugmentConfig& cfg);

struct LossWeights {
  double w_cd = 1.0;
  double w_feat = 1.0;
  double w_kl = 1.0;
  double w_gan = 1.0;
  double w_con = 1.0;

  /// Throws ConfigError unless every weight is finite and non-negative.
  void validate() const;
};

struct LossTerms {
  double chamfer = 0.0;
  double feature = 0.0;
  double kl = 0.0;
  double gen_gan = 0.0;
  double contrastive = 0.0;
  double critic_gan = 0.0;
  double critic_contrastive = 0.0;
};

struct LossReport {
  LossTerms terms;
  LossWeights weights;
  double generator_total = 0.0;
  double critic_total = 0.0;
  /// False in GAN-only training: the Chamfer, feature and KL columns are omitted.
  bool reconstruction = true;

  /// Column names and values in a fixed order (CSV layout).
  std::vector<std::pair<std::string, double>> columns() const;
};

LossReport total_objective(const LossTerms& terms, const LossWeights& weights, bool reconstruction = true);

/// sum_i w_i * v_i over entries with nonzero weight; a zero 1x1 constant when all are zero.
Var weighted_sum(nn::Tape& tape, const std::vector<std::pair<double, Var>>& terms);

}  // namespace patchgen::losses
