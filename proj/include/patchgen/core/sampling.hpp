#pragma once

#include "patchgen/core/point_cloud.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace patchgen {

/// Draws `n` points with probability proportional to triangle area. When
/// `face_ids` is non-null it receives the source face of every point.
PointCloud sample_mesh_uniform(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                               std::vector<int>* face_ids = nullptr);

/// Centers at the centroid and scales the farthest point to radius 1. A cloud
/// whose points all coincide is only centered.
PointCloud normalize(const PointCloud& cloud);

enum class Axis { x = 0, y = 1, z = 2 };

Axis parse_axis(std::string_view name);

struct AugmentConfig {
  Axis axis = Axis::y;
  double jitter_sigma = 0.01;
  double jitter_clip = 0.05;
  /// Rotation angle is drawn uniformly from [0, max_angle).
  double max_angle = 2.0 * std::numbers::pi;
};

/// One augmentation draw: rotate every point by `rotation`, then add `noise`.
struct AugmentDraw {
  Eigen::Matrix3d rotation;
  Points noise;
};

Eigen::Matrix3d rotation_about(Axis axis, double angle);

/// Consumes the generator in a fixed order: angle first, then noise row by row.
AugmentDraw draw_augmentation(std::mt19937_64& rng, std::size_t n, const AugmentConfig& cfg);

PointCloud augment(const PointCloud& cloud, std::uint64_t seed, const AugmentConfig& cfg = {});

enum class SyntheticShape { sphere, cube, cylinder, two_box_chair };

SyntheticShape parse_shape(std::string_view name);
std::string_view shape_name(SyntheticShape shape);

/// `n` points uniformly on the named surface, then normalized.
PointCloud make_synthetic(SyntheticShape shape, std::size_t n, std::uint64_t seed);
PointCloud make_synthetic(std::string_view shape, std::size_t n, std::uint64_t seed);

/// Axis-aligned box surface as 12 triangles.
TriangleMesh make_box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

}  // namespace patchgen
