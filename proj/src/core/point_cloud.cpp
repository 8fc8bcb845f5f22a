#include "patchgen/core/point_cloud.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace patchgen {

void validate_points(const Points& points) {
  if (points.rows() < 1) throw DataError("point cloud must contain at least one point");
  if (!points.allFinite()) throw DataError("point cloud contains non-finite coordinates");
}

PointCloud::PointCloud(Points points) : points_(std::move(points)) { validate_points(points_); }

PointCloud PointCloud::rounded_to_f32() const {
  Points p = points_.cast<float>().cast<double>();
  return PointCloud(std::move(p));
}

PointCloudBatch::PointCloudBatch(std::vector<PointCloud> clouds) : clouds_(std::move(clouds)) {
  if (clouds_.empty()) throw DataError("batch must contain at least one cloud");
  const std::size_t n = clouds_.front().size();
  for (const auto& c : clouds_) {
    if (c.size() != n) throw DataError("batch clouds must share one point count");
  }
}

Points PointCloudBatch::stacked() const {
  const auto n = static_cast<Eigen::Index>(points_per_cloud());
  Points out(n * static_cast<Eigen::Index>(clouds_.size()), 3);
  for (std::size_t b = 0; b < clouds_.size(); ++b) {
    out.middleRows(static_cast<Eigen::Index>(b) * n, n) = clouds_[b].points();
  }
  return out;
}

double TriangleMesh::triangle_area(Eigen::Index face) const {
  const Eigen::Vector3d a = vertices.row(faces(face, 0)).transpose();
  const Eigen::Vector3d b = vertices.row(faces(face, 1)).transpose();
  const Eigen::Vector3d c = vertices.row(faces(face, 2)).transpose();
  return 0.5 * (b - a).cross(c - a).norm();
}

void TriangleMesh::validate() const {
  const auto v = vertices.rows();
  if (faces.rows() == 0) throw DataError("degenerate mesh: no faces");
  if (!vertices.allFinite()) throw DataError("mesh has non-finite vertices");
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (faces(f, k) < 0 || faces(f, k) >= v) {
        throw DataError("face " + std::to_string(f) + " references vertex " + std::to_string(faces(f, k)) +
                        " outside [0, " + std::to_string(v) + ")");
      }
    }
  }
  double total = 0.0;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) total += triangle_area(f);
  if (!(total > 0.0)) throw DataError("degenerate mesh");
}

void Dataset::validate(std::size_t n) const {
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (clouds[i].size() != n) {
      throw DataError("dataset cloud " + std::to_string(i) + " has " + std::to_string(clouds[i].size()) +
                      " points, expected " + std::to_string(n));
    }
  }
}

}  // namespace patchgen
