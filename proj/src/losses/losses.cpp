#include "patchgen/losses/losses.hpp"

#include <cmath>
#include <limits>

namespace patchgen::losses {

namespace {

struct NearestPairs {
  std::vector<Eigen::Index> x_to_y;
  std::vector<Eigen::Index> y_to_x;
  double value = 0.0;
};

// One pass over all pairs fills both nearest-neighbor tables; ties keep the lowest index.
NearestPairs nearest_pairs(const double* x, Eigen::Index nx, const double* y, Eigen::Index ny) {
  NearestPairs p;
  p.x_to_y.assign(static_cast<std::size_t>(nx), 0);
  p.y_to_x.assign(static_cast<std::size_t>(ny), 0);
  std::vector<double> best_x(static_cast<std::size_t>(nx), std::numeric_limits<double>::infinity());
  std::vector<double> best_y(static_cast<std::size_t>(ny), std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double a0 = x[3 * i], a1 = x[3 * i + 1], a2 = x[3 * i + 2];
    double bx = best_x[static_cast<std::size_t>(i)];
    Eigen::Index ix = 0;
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double d0 = a0 - y[3 * j], d1 = a1 - y[3 * j + 1], d2 = a2 - y[3 * j + 2];
      const double d = d0 * d0 + d1 * d1 + d2 * d2;
      if (d < bx) {
        bx = d;
        ix = j;
      }
      if (d < best_y[static_cast<std::size_t>(j)]) {
        best_y[static_cast<std::size_t>(j)] = d;
        p.y_to_x[static_cast<std::size_t>(j)] = i;
      }
    }
    best_x[static_cast<std::size_t>(i)] = bx;
    p.x_to_y[static_cast<std::size_t>(i)] = ix;
  }
  double sx = 0.0, sy = 0.0;
  for (double d : best_x) sx += d;
  for (double d : best_y) sy += d;
  p.value = sx / static_cast<double>(nx) + sy / static_cast<double>(ny);
  return p;
}

}  // namespace

Var chamfer(const Var& x, const Var& y, Eigen::Index nx, Eigen::Index ny) {
  if (x.cols() != 3 || y.cols() != 3) throw ShapeError("chamfer expects 3-column point blocks");
  if (nx < 1 || ny < 1) throw ShapeError("chamfer of an empty cloud");
  if (x.rows() % nx != 0 || y.rows() % ny != 0 || x.rows() / nx != y.rows() / ny) {
    throw ShapeError("chamfer operands hold different cloud counts");
  }
  if (x.tape() != y.tape()) throw ShapeError("operands belong to different tapes");
  const Eigen::Index clouds = x.rows() / nx;
  std::vector<NearestPairs> pairs;
  pairs.reserve(static_cast<std::size_t>(clouds));
  double total = 0.0;
  for (Eigen::Index b = 0; b < clouds; ++b) {
    pairs.push_back(nearest_pairs(x.value().data() + 3 * b * nx, nx, y.value().data() + 3 * b * ny, ny));
    total += pairs.back().value;
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(clouds);
  const auto ix = x.id(), iy = y.id();
  return x.tape()->record(std::move(out), {x, y}, [ix, iy, nx, ny, clouds, pairs = std::move(pairs)](
                                                      nn::Tape& tape, std::size_t self) {
    const double g = tape.grad(self)(0, 0) / static_cast<double>(clouds);
    const Matrix& xv = tape.value(ix);
    const Matrix& yv = tape.value(iy);
    Matrix dx = Matrix::Zero(xv.rows(), 3);
    Matrix dy = Matrix::Zero(yv.rows(), 3);
    const double cx = 2.0 * g / static_cast<double>(nx), cy = 2.0 * g / static_cast<double>(ny);
    for (Eigen::Index b = 0; b < clouds; ++b) {
      const auto& p = pairs[static_cast<std::size_t>(b)];
      for (Eigen::Index i = 0; i < nx; ++i) {
        const Eigen::Index r = b * nx + i, s = b * ny + p.x_to_y[static_cast<std::size_t>(i)];
        const Eigen::RowVector3d diff = xv.row(r) - yv.row(s);
        dx.row(r) += cx * diff;
        dy.row(s) -= cx * diff;
      }
      for (Eigen::Index j = 0; j < ny; ++j) {
        const Eigen::Index s = b * ny + j, r = b * nx + p.y_to_x[static_cast<std::size_t>(j)];
        const Eigen::RowVector3d diff = yv.row(s) - xv.row(r);
        dy.row(s) += cy * diff;
        dx.row(r) -= cy * diff;
      }
    }
    tape.accumulate(ix, dx);
    tape.accumulate(iy, dy);
  });
}

double chamfer_value(const Points& x, const Points& y) {
  if (x.rows() == 0 || y.rows() == 0) throw ShapeError("chamfer of an empty cloud");
  return nearest_pairs(x.data(), x.rows(), y.data(), y.rows()).value;
}

double chamfer(const PointCloud& x, const PointCloud& y) { return chamfer_value(x.points(), y.points()); }

Var kl_gaussian(const Var& mu, const Var& logvar) {
  nn::Tape& tape = *mu.tape();
  const Var ones = tape.constant(Matrix::Ones(mu.rows(), mu.cols()));
  const Var inner = nn::sub(nn::add(nn::mul(mu, mu), nn::exp(logvar)), nn::add(logvar, ones));
  return nn::scale(nn::sum(inner), 0.5 / static_cast<double>(mu.rows()));
}

double kl_gaussian(const model::PosteriorParams& post) {
  const Eigen::ArrayXd lv = post.logvar.array();
  return 0.5 * (post.mu.array().square() + lv.exp() - lv - 1.0).sum();
}

Var feature_recon(const Var& f_real, const Var& f_fake) {
  const Var d = nn::sub(f_real, f_fake);
  return nn::scale(nn::sum(nn::mul(d, d)), 1.0 / static_cast<double>(d.rows()));
}

GanLosses gan_losses_vaegan(const Var& logit_real, const Var& logit_rec, const Var& logit_gen) {
  const Var real_term = nn::mean(nn::log_sigmoid(logit_real));
  const Var rec_fake = nn::mean(nn::log_sigmoid(nn::scale(logit_rec, -1.0)));
  const Var gen_fake = nn::mean(nn::log_sigmoid(nn::scale(logit_gen, -1.0)));
  const Var critic = nn::scale(nn::add(nn::add(real_term, rec_fake), gen_fake), -1.0);
  const Var generator =
      nn::scale(nn::add(nn::mean(nn::log_sigmoid(logit_rec)), nn::mean(nn::log_sigmoid(logit_gen))), -1.0);
  return {critic, generator};
}

GanLosses gan_loss_plain(const Var& logit_real, const Var& logit_gen) {
  const Var real_term = nn::mean(nn::log_sigmoid(logit_real));
  const Var gen_fake = nn::mean(nn::log_sigmoid(nn::scale(logit_gen, -1.0)));
  return {nn::scale(nn::add(real_term, gen_fake), -1.0), nn::scale(nn::mean(nn::log_sigmoid(logit_gen)), -1.0)};
}

Var contrastive(const Var& anchors, const Var& positives, double temperature) {
  if (anchors.rows() < 2) throw ShapeError("contrastive loss needs a batch of at least 2");
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw ShapeError("anchor and positive embeddings differ in shape");
  }
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  if (anchors.tape() != positives.tape()) throw ShapeError("operands belong to different tapes");
  const Eigen::Index b = anchors.rows();
  const Matrix& e = anchors.value();
  const Matrix& p = positives.value();
  // Column 0 of `logits` is the positive; column j + 1 is anchor j (the diagonal is masked).
  const Matrix sim = e * e.transpose() / temperature;
  const Eigen::VectorXd pos = (e.array() * p.array()).rowwise().sum().matrix() / temperature;
  Matrix prob(b, b + 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double mx = pos(i);
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j != i) mx = std::max(mx, sim(i, j));
    }
    double denom = std::exp(pos(i) - mx);
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j != i) denom += std::exp(sim(i, j) - mx);
    }
    loss += -(pos(i) - mx) + std::log(denom);
    prob(i, 0) = std::exp(pos(i) - mx) / denom;
    for (Eigen::Index j = 0; j < b; ++j) prob(i, j + 1) = j == i ? 0.0 : std::exp(sim(i, j) - mx) / denom;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(b);
  const auto ia = anchors.id(), ip = positives.id();
  return anchors.tape()->record(std::move(out), {anchors, positives}, [ia, ip, b, temperature, prob = std::move(prob)](
                                                                          nn::Tape& tape, std::size_t self) {
    const double g = tape.grad(self)(0, 0) / static_cast<double>(b) / temperature;
    const Matrix& e = tape.value(ia);
    const Matrix& p = tape.value(ip);
    // dL/dsim(i, j) = prob(i, j + 1) and dL/dpos(i) = prob(i, 0) - 1, each scaled by g.
    const Matrix ds = prob.rightCols(b);
    Eigen::VectorXd dpos = prob.col(0).array() - 1.0;
    Matrix de = g * (ds + ds.transpose()) * e;
    de += g * dpos.asDiagonal() * p;
    tape.accumulate(ia, de);
    if (tape.requires_grad(ip)) tape.accumulate(ip, Matrix(g * dpos.asDiagonal() * e));
  });
}

Var augment_batch(const Var& x, Eigen::Index n, std::mt19937_64& rng, const AugmentConfig& cfg) {
  if (x.cols() != 3 || n < 1 || x.rows() % n != 0) throw ShapeError("augment_batch expects stacked 3D clouds");
  const Eigen::Index clouds = x.rows() / n;
  std::vector<Eigen::Matrix3d> rotations;
  Matrix out(x.rows(), 3);
  for (Eigen::Index b = 0; b < clouds; ++b) {
    const AugmentDraw draw = draw_augmentation(rng, static_cast<std::size_t>(n), cfg);
    out.middleRows(b * n, n) = x.value().middleRows(b * n, n) * draw.rotation.transpose() + draw.noise;
    rotations.push_back(draw.rotation);
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, n, rotations = std::move(rotations)](nn::Tape& tape,
                                                                                          std::size_t self) {
    const Matrix& g = tape.grad(self);
    Matrix dx(g.rows(), 3);
    for (std::size_t b = 0; b < rotations.size(); ++b) {
      const auto r = static_cast<Eigen::Index>(b) * n;
      dx.middleRows(r, n) = g.middleRows(r, n) * rotations[b];
    }
    tape.accumulate(ix, dx);
  });
}

void LossWeights::validate() const {
  for (double w : {w_cd, w_feat, w_kl, w_gan, w_con}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

std::vector<std::pair<std::string, double>> LossReport::columns() const {
  std::vector<std::pair<std::string, double>> cols;
  if (reconstruction) cols = {{"chamfer", terms.chamfer}, {"feature", terms.feature}, {"kl", terms.kl}};
  cols.insert(cols.end(), {{"gen_gan", terms.gen_gan},
          {"contrastive", terms.contrastive},
          {"generator_total", generator_total},
          {"critic_gan", terms.critic_gan},
          {"critic_contrastive", terms.critic_contrastive},
          {"critic_total", critic_total}});
  return cols;
}

LossReport total_objective(const LossTerms& terms, const LossWeights& weights, bool reconstruction) {
  weights.validate();
  LossReport r{terms, weights, 0.0, 0.0, reconstruction};
  if (!reconstruction) r.terms.chamfer = r.terms.feature = r.terms.kl = 0.0;
  r.generator_total = weights.w_cd * r.terms.chamfer + weights.w_feat * r.terms.feature + weights.w_kl * r.terms.kl +
                      weights.w_gan * terms.gen_gan + weights.w_con * terms.contrastive;
  r.critic_total = terms.critic_gan + weights.w_con * terms.critic_contrastive;
  return r;
}

Var weighted_sum(nn::Tape& tape, const std::vector<std::pair<double, Var>>& terms) {
  Var acc;
  for (const auto& [w, v] : terms) {
    if (w == 0.0) continue;
    const Var t = w == 1.0 ? v : nn::scale(v, w);
    acc = acc.valid() ? nn::add(acc, t) : t;
  }
  return acc.valid() ? acc : tape.constant(Matrix::Zero(1, 1));
}

}  // namespace patchgen::losses
