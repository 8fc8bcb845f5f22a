#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchgen {

/// Row-major N x 3 coordinate block.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (sizes, emptiness, degeneracy).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A set of N >= 1 finite 3D points.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(Points points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  const Points& points() const { return points_; }
  Eigen::RowVector3d point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)); }

  /// Copy with every coordinate rounded to the nearest f32.
  PointCloud rounded_to_f32() const;

 private:
  Points points_;
};

/// Throws DataError when the block is empty or contains NaN/Inf.
void validate_points(const Points& points);

/// B clouds sharing one point count.
class PointCloudBatch {
 public:
  explicit PointCloudBatch(std::vector<PointCloud> clouds);

  std::size_t batch_size() const { return clouds_.size(); }
  std::size_t points_per_cloud() const { return clouds_.front().size(); }
  const PointCloud& operator[](std::size_t i) const { return clouds_[i]; }
  const std::vector<PointCloud>& clouds() const { return clouds_; }

  /// Rows [b*N, (b+1)*N) hold cloud b.
  Points stacked() const;

 private:
  std::vector<PointCloud> clouds_;
};

struct TriangleMesh {
  Points vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> faces;

  /// Throws DataError on out-of-range indices or zero total area.
  void validate() const;
  double triangle_area(Eigen::Index face) const;
};

struct Dataset {
  std::vector<PointCloud> clouds;
  std::string category;

  std::size_t size() const { return clouds.size(); }
  /// Every cloud must have exactly `n` points.
  void validate(std::size_t n) const;
};

}  // namespace patchgen
