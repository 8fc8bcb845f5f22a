#include "patchgen/model/encoder.hpp"

namespace patchgen::model {

namespace {

std::vector<Eigen::Index> with_input(const std::vector<Eigen::Index>& widths) {
  if (widths.empty()) throw ConfigError("encoder needs at least one MLP width");
  std::vector<Eigen::Index> out{3};
  out.insert(out.end(), widths.begin(), widths.end());
  return out;
}

}  // namespace

Encoder::Encoder(EncoderConfig cfg, std::string prefix)
    : cfg_(std::move(cfg)),
      prefix_(std::move(prefix)),
      backbone_(prefix_ + ".mlp", with_input(cfg_.widths), true),
      mu_head_(prefix_ + ".mu", cfg_.widths.back(), cfg_.latent_dim),
      logvar_head_(prefix_ + ".logvar", cfg_.widths.back(), cfg_.latent_dim) {}

void Encoder::init(ParameterStore& store, std::mt19937_64& rng) const {
  backbone_.init(store, rng);
  mu_head_.init(store, rng);
  logvar_head_.init(store, rng);
}

Encoder::Output Encoder::forward(Tape& tape, ParameterStore& store, const Var& points, Eigen::Index n) const {
  if (points.cols() != 3) throw ShapeError("encoder expects 3 input columns");
  const Var pooled = nn::segment_max(backbone_.forward(tape, store, points), n);
  return {mu_head_.forward(tape, store, pooled),
          nn::clamp(logvar_head_.forward(tape, store, pooled), kLogvarMin, kLogvarMax)};
}

PosteriorParams Encoder::encode(const PointCloud& cloud, ParameterStore& store) const {
  Tape tape;
  const Var x = tape.constant(cloud.points());
  const Output out = forward(tape, store, x, x.rows());
  return {out.mu.value().row(0).transpose(), out.logvar.value().row(0).transpose()};
}

std::size_t Encoder::param_count() const {
  return backbone_.param_count() + mu_head_.param_count() + logvar_head_.param_count();
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

Var reparameterize(const Var& mu, const Var& logvar, const Matrix& eps) {
  Tape& tape = *mu.tape();
  const Var sigma = nn::exp(nn::scale(logvar, 0.5));
  return nn::add(mu, nn::mul(sigma, tape.constant(eps)));
}

LatentCode reparameterize(const PosteriorParams& post, const Eigen::VectorXd& eps) {
  const Eigen::VectorXd logvar = post.logvar.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  return {post.mu + (0.5 * logvar).array().exp().matrix().cwiseProduct(eps), LatentCode::Origin::posterior};
}

LatentCode reparameterize(const PosteriorParams& post, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix eps = standard_normal(post.mu.size(), 1, rng);
  return reparameterize(post, Eigen::VectorXd(eps.col(0)));
}

LatentCode sample_prior(Eigen::Index latent_dim, std::uint64_t seed) {
  if (latent_dim < 1) throw ConfigError("latent dimension must be at least 1");
  std::mt19937_64 rng(seed);
  const Matrix z = standard_normal(latent_dim, 1, rng);
  return {Eigen::VectorXd(z.col(0)), LatentCode::Origin::prior};
}

}  // namespace patchgen::model
