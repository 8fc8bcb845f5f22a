#include "patchgen/model/discriminator.hpp"

#include <cmath>

namespace patchgen::model {

namespace {

std::vector<Eigen::Index> with_input(const std::vector<Eigen::Index>& widths) {
  if (widths.empty()) throw ConfigError("discriminator needs at least one backbone width");
  std::vector<Eigen::Index> out{3};
  out.insert(out.end(), widths.begin(), widths.end());
  return out;
}

}  // namespace

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Discriminator::Discriminator(DiscriminatorConfig cfg, std::string prefix)
    : cfg_(std::move(cfg)),
      prefix_(std::move(prefix)),
      backbone_(prefix_ + ".mlp", with_input(cfg_.widths), true),
      head_(prefix_ + ".head", {cfg_.widths.back(), cfg_.head_hidden, 1}, false),
      contrast_(prefix_ + ".contrast", cfg_.widths.back(), cfg_.contrast_dim) {}

void Discriminator::init(ParameterStore& store, std::mt19937_64& rng) const {
  backbone_.init(store, rng);
  head_.init(store, rng);
  contrast_.init(store, rng);
}

Var Discriminator::features(Tape& tape, ParameterStore& store, const Var& points, Eigen::Index n) const {
  if (points.cols() != 3) throw ShapeError("discriminator expects 3 input columns");
  if (n < 1 || points.rows() % n != 0) throw ShapeError("discriminator input rows not divisible by cloud size");
  return nn::segment_max(backbone_.forward(tape, store, points), n);
}

Discriminator::Output Discriminator::forward(Tape& tape, ParameterStore& store, const Var& points,
                                             Eigen::Index n) const {
  const Var f = features(tape, store, points, n);
  return {nn::clamp(head_.forward(tape, store, f), -kLogitClamp, kLogitClamp), f,
          nn::l2_normalize_rows(contrast_.forward(tape, store, f))};
}

CriticOutput Discriminator::criticize(const PointCloud& cloud, ParameterStore& store) const {
  Tape tape;
  const Var x = tape.constant(cloud.points());
  const Output out = forward(tape, store, x, x.rows());
  return {sigmoid(out.logit.item()), out.feature.value().row(0).transpose(), out.embed.value().row(0).transpose()};
}

Eigen::VectorXd Discriminator::extract_embedding(const PointCloud& cloud, ParameterStore& store) const {
  Tape tape;
  const Var x = tape.constant(cloud.points());
  return features(tape, store, x, x.rows()).value().row(0).transpose();
}

std::size_t Discriminator::param_count() const {
  return backbone_.param_count() + head_.param_count() + contrast_.param_count();
}

}  // namespace patchgen::model
