#pragma once

#include "patchgen/metrics/emd.hpp"

#include <string>
#include <vector>

namespace patchgen::metrics {

enum class DistanceKind { cd, emd };

/// rows index the first set, columns the second.
struct DistanceMatrix {
  Eigen::MatrixXd values;
  DistanceKind kind = DistanceKind::cd;
};

/// Worker count: PATCHGEN_THREADS when set to a positive integer, else the hardware count.
unsigned thread_count();

DistanceMatrix distance_matrix(const std::vector<PointCloud>& rows, const std::vector<PointCloud>& cols,
                               DistanceKind kind, EmdMode emd_mode = EmdMode::exact);

/// Mean over columns of the column minimum.
double mmd(const DistanceMatrix& dm);
/// Distinct row-wise argmin columns divided by the column count; ties go to the lowest column.
double coverage(const DistanceMatrix& dm);

/// Leave-one-out 1-NN accuracy over gen followed by ref. `gen_gen`, `gen_ref`
/// and `ref_ref` are the blocks of the joint distance matrix.
double one_nna(const DistanceMatrix& gen_gen, const DistanceMatrix& gen_ref, const DistanceMatrix& ref_ref);
double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, DistanceKind kind,
               EmdMode emd_mode = EmdMode::exact);

inline constexpr int kJsdGrid = 28;

/// Pooled-point occupancy histogram over grid^3 voxels of [-1,1]^3; outside points are clipped.
Eigen::VectorXd occupancy(const std::vector<PointCloud>& set, int grid = kJsdGrid);
/// Jensen-Shannon divergence (natural log) of two distributions, with 0 log 0 = 0.
double jsd_distributions(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid = kJsdGrid);

struct MetricReport {
  double jsd = 0.0;
  double mmd_cd = 0.0;
  double mmd_emd = 0.0;
  double cov_cd = 0.0;
  double cov_emd = 0.0;
  double nna_cd = 0.0;
  double nna_emd = 0.0;
  bool scaled = false;
  EmdMode emd_mode = EmdMode::exact;

  /// jsd and mmd_emd x 10^2, mmd_cd x 10^3, cov and nna in percent.
  MetricReport scaled_copy() const;
  std::string to_json() const;
};

struct EvaluationMatrices {
  DistanceMatrix gen_ref_cd, gen_ref_emd;
  DistanceMatrix gen_gen_cd, gen_gen_emd;
  DistanceMatrix ref_ref_cd, ref_ref_emd;
};

/// Metrics from precomputed matrices (unscaled).
MetricReport report_from_matrices(const EvaluationMatrices& m, double jsd_value, EmdMode emd_mode);

/// Computes every distance matrix once and derives all seven metrics.
MetricReport evaluate(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, bool scaled,
                      EvaluationMatrices* matrices = nullptr);

std::string matrix_csv(const DistanceMatrix& dm);

}  // namespace patchgen::metrics
