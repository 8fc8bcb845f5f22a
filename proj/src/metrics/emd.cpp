#include "patchgen/metrics/emd.hpp"

#include <algorithm>
#include <limits>

namespace patchgen::metrics {

std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw ShapeError("assignment needs a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials u (rows), v (columns); p[j] is the row matched to column j.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(p[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(static_cast<std::size_t>(n));
  for (Eigen::Index j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

std::vector<Eigen::Index> auction_assignment(const Eigen::MatrixXd& cost, double final_epsilon) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw ShapeError("assignment needs a square cost matrix");
  if (!(final_epsilon > 0.0)) throw ConfigError("auction epsilon must be positive");
  std::vector<Eigen::Index> owner(static_cast<std::size_t>(n), -1), assigned(static_cast<std::size_t>(n), -1);
  if (n == 0) return assigned;
  // Bidders maximize value = -cost - price.
  std::vector<double> price(static_cast<std::size_t>(n), 0.0);
  double eps = std::max(cost.maxCoeff() / 4.0, final_epsilon);
  while (true) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(assigned.begin(), assigned.end(), -1);
    std::vector<Eigen::Index> queue(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) queue[static_cast<std::size_t>(i)] = n - 1 - i;
    while (!queue.empty()) {
      const Eigen::Index i = queue.back();
      queue.pop_back();
      double best = -std::numeric_limits<double>::infinity(), second = best;
      Eigen::Index best_j = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double value = -cost(i, j) - price[static_cast<std::size_t>(j)];
        if (value > best) {
          second = best;
          best = value;
          best_j = j;
        } else if (value > second) {
          second = value;
        }
      }
      const double increment = n > 1 ? best - second + eps : eps;
      price[static_cast<std::size_t>(best_j)] += increment;
      const Eigen::Index prev = owner[static_cast<std::size_t>(best_j)];
      if (prev >= 0) {
        assigned[static_cast<std::size_t>(prev)] = -1;
        queue.push_back(prev);
      }
      owner[static_cast<std::size_t>(best_j)] = i;
      assigned[static_cast<std::size_t>(i)] = best_j;
    }
    if (eps <= final_epsilon) break;
    eps = std::max(eps / 5.0, final_epsilon);
  }
  return assigned;
}

namespace {

Eigen::MatrixXd euclidean_cost(const Points& x, const Points& y) {
  Eigen::MatrixXd c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).norm();
  }
  return c;
}

}  // namespace

EmdMode auto_emd_mode(Eigen::Index n) { return n <= kExactEmdLimit ? EmdMode::exact : EmdMode::approx; }

double emd(const Points& x, const Points& y, EmdMode mode) {
  if (x.rows() != y.rows()) {
    throw ShapeError("emd needs equal-size clouds (" + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()) + ")");
  }
  const Eigen::Index n = x.rows();
  if (n == 0) throw ShapeError("emd of empty clouds");
  const Eigen::MatrixXd c = euclidean_cost(x, y);
  const auto match = mode == EmdMode::exact ? solve_assignment(c) : auction_assignment(c, 1e-4 / static_cast<double>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += c(i, match[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(n);
}

double emd(const PointCloud& x, const PointCloud& y, EmdMode mode) { return emd(x.points(), y.points(), mode); }

}  // namespace patchgen::metrics
