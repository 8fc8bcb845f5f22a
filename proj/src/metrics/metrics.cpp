#include "patchgen/metrics/metrics.hpp"

#include "patchgen/losses/losses.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

namespace patchgen::metrics {

unsigned thread_count() {
  if (const char* env = std::getenv("PATCHGEN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

DistanceMatrix distance_matrix(const std::vector<PointCloud>& rows, const std::vector<PointCloud>& cols,
                               DistanceKind kind, EmdMode emd_mode) {
  DistanceMatrix dm{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size())),
                    kind};
  const std::size_t total = rows.size() * cols.size();
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < total; t = next++) {
      const std::size_t i = t / cols.size(), j = t % cols.size();
      dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kind == DistanceKind::cd ? losses::chamfer(rows[i], cols[j]) : emd(rows[i], cols[j], emd_mode);
    }
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), std::max<std::size_t>(total, 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return dm;
}

double mmd(const DistanceMatrix& dm) {
  if (dm.values.size() == 0) throw ShapeError("mmd of an empty distance matrix");
  return dm.values.colwise().minCoeff().mean();
}

double coverage(const DistanceMatrix& dm) {
  if (dm.values.size() == 0) throw ShapeError("coverage of an empty distance matrix");
  std::set<Eigen::Index> matched;
  for (Eigen::Index i = 0; i < dm.values.rows(); ++i) {
    Eigen::Index best = 0;
    dm.values.row(i).minCoeff(&best);
    matched.insert(best);
  }
  return static_cast<double>(matched.size()) / static_cast<double>(dm.values.cols());
}

double one_nna(const DistanceMatrix& gen_gen, const DistanceMatrix& gen_ref, const DistanceMatrix& ref_ref) {
  const Eigen::Index g = gen_ref.values.rows(), r = gen_ref.values.cols();
  if (g == 0 || r == 0) throw ShapeError("1-NNA needs two nonempty sets");
  if (gen_gen.values.rows() != g || gen_gen.values.cols() != g || ref_ref.values.rows() != r ||
      ref_ref.values.cols() != r) {
    throw ShapeError("1-NNA distance blocks have inconsistent shapes");
  }
  const Eigen::Index n = g + r;
  Eigen::MatrixXd joint(n, n);
  joint << gen_gen.values, gen_ref.values, gen_ref.values.transpose(), ref_ref.values;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index nn = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (joint(i, j) < best) {
        best = joint(i, j);
        nn = j;
      }
    }
    if (nn < 0) continue;
    if ((i < g) == (nn < g)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, DistanceKind kind,
               EmdMode emd_mode) {
  return one_nna(distance_matrix(gen, gen, kind, emd_mode), distance_matrix(gen, ref, kind, emd_mode),
                 distance_matrix(ref, ref, kind, emd_mode));
}

Eigen::VectorXd occupancy(const std::vector<PointCloud>& set, int grid) {
  if (set.empty()) throw DataError("occupancy of an empty set");
  if (grid < 1) throw ConfigError("JSD grid must be positive");
  Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid) * grid * grid);
  auto cell = [grid](double v) {
    const int c = static_cast<int>(std::floor((v + 1.0) * 0.5 * grid));
    return std::clamp(c, 0, grid - 1);
  };
  double total = 0.0;
  for (const auto& cloud : set) {
    for (Eigen::Index i = 0; i < cloud.points().rows(); ++i) {
      const auto& p = cloud.points();
      h((cell(p(i, 0)) * grid + cell(p(i, 1))) * grid + cell(p(i, 2))) += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw DataError("occupancy of clouds without points");
  return h / total;
}

double jsd_distributions(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ShapeError("JSD of distributions with different supports");
  double kl_p = 0.0, kl_q = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p(i) + q(i));
    if (p(i) > 0.0) kl_p += p(i) * std::log(p(i) / m);
    if (q(i) > 0.0) kl_q += q(i) * std::log(q(i) / m);
  }
  return std::max(0.0, 0.5 * kl_p + 0.5 * kl_q);
}

double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid) {
  return jsd_distributions(occupancy(gen, grid), occupancy(ref, grid));
}

MetricReport MetricReport::scaled_copy() const {
  if (scaled) return *this;
  MetricReport r = *this;
  r.jsd *= 1e2;
  r.mmd_emd *= 1e2;
  r.mmd_cd *= 1e3;
  r.cov_cd *= 1e2;
  r.cov_emd *= 1e2;
  r.nna_cd *= 1e2;
  r.nna_emd *= 1e2;
  r.scaled = true;
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["jsd"] = jsd;
  j["mmd_cd"] = mmd_cd;
  j["mmd_emd"] = mmd_emd;
  j["cov_cd"] = cov_cd;
  j["cov_emd"] = cov_emd;
  j["nna_cd"] = nna_cd;
  j["nna_emd"] = nna_emd;
  j["scaled"] = scaled;
  j["emd_mode"] = emd_mode == EmdMode::exact ? "exact" : "approx";
  j["cd_reduction"] = "mean";
  return j.dump(2);
}

MetricReport report_from_matrices(const EvaluationMatrices& m, double jsd_value, EmdMode emd_mode) {
  MetricReport r;
  r.jsd = jsd_value;
  r.mmd_cd = mmd(m.gen_ref_cd);
  r.mmd_emd = mmd(m.gen_ref_emd);
  r.cov_cd = coverage(m.gen_ref_cd);
  r.cov_emd = coverage(m.gen_ref_emd);
  r.nna_cd = one_nna(m.gen_gen_cd, m.gen_ref_cd, m.ref_ref_cd);
  r.nna_emd = one_nna(m.gen_gen_emd, m.gen_ref_emd, m.ref_ref_emd);
  r.emd_mode = emd_mode;
  return r;
}

MetricReport evaluate(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, bool scaled,
                      EvaluationMatrices* matrices) {
  if (gen.empty() || ref.empty()) throw DataError("evaluation needs nonempty generated and reference sets");
  const Eigen::Index n = static_cast<Eigen::Index>(gen.front().size());
  for (const auto* set : {&gen, &ref}) {
    for (const auto& c : *set) {
      if (static_cast<Eigen::Index>(c.size()) != n) throw DataError("evaluation needs clouds of equal size");
    }
  }
  const EmdMode mode = auto_emd_mode(n);
  EvaluationMatrices m;
  m.gen_ref_cd = distance_matrix(gen, ref, DistanceKind::cd);
  m.gen_ref_emd = distance_matrix(gen, ref, DistanceKind::emd, mode);
  m.gen_gen_cd = distance_matrix(gen, gen, DistanceKind::cd);
  m.gen_gen_emd = distance_matrix(gen, gen, DistanceKind::emd, mode);
  m.ref_ref_cd = distance_matrix(ref, ref, DistanceKind::cd);
  m.ref_ref_emd = distance_matrix(ref, ref, DistanceKind::emd, mode);
  MetricReport r = report_from_matrices(m, jsd(gen, ref), mode);
  if (matrices != nullptr) *matrices = std::move(m);
  return scaled ? r.scaled_copy() : r;
}

std::string matrix_csv(const DistanceMatrix& dm) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < dm.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < dm.values.cols(); ++j) {
      if (j > 0) out << ',';
      out << dm.values(i, j);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace patchgen::metrics
