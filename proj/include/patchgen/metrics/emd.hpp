#pragma once

#include "patchgen/core/point_cloud.hpp"

#include <Eigen/Core>

#include <vector>

namespace patchgen::metrics {

enum class EmdMode { exact, approx };

/// Largest cloud size solved exactly when the caller asks for automatic selection.
inline constexpr Eigen::Index kExactEmdLimit = 1024;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// potentials, O(n^3)). Returns the column assigned to each row.
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost);

/// Auction algorithm with epsilon scaling. The result's total cost is within
/// n * final_epsilon of the optimum.
std::vector<Eigen::Index> auction_assignment(const Eigen::MatrixXd& cost, double final_epsilon);

/// (1/N) min over bijections of the summed Euclidean distances.
double emd(const Points& x, const Points& y, EmdMode mode = EmdMode::exact);
double emd(const PointCloud& x, const PointCloud& y, EmdMode mode = EmdMode::exact);

/// Exact for N <= kExactEmdLimit, approximate above.
EmdMode auto_emd_mode(Eigen::Index n);

}  // namespace patchgen::metrics
