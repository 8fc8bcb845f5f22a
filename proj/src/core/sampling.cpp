#include "patchgen/core/sampling.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>

namespace patchgen {

PointCloud sample_mesh_uniform(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                               std::vector<int>* face_ids) {
  if (n < 1) throw DataError("sample count must be at least 1");
  mesh.validate();

  const auto faces = mesh.faces.rows();
  std::vector<double> cumulative(static_cast<std::size_t>(faces));
  double total = 0.0;
  for (Eigen::Index f = 0; f < faces; ++f) {
    total += mesh.triangle_area(f);
    cumulative[static_cast<std::size_t>(f)] = total;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Points out(static_cast<Eigen::Index>(n), 3);
  if (face_ids) face_ids->assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    // upper_bound never lands on a zero-area face: its cumulative value equals its predecessor's.
    const auto f = static_cast<Eigen::Index>(it - cumulative.begin());

    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Eigen::RowVector3d a = mesh.vertices.row(mesh.faces(f, 0));
    const Eigen::RowVector3d b = mesh.vertices.row(mesh.faces(f, 1));
    const Eigen::RowVector3d c = mesh.vertices.row(mesh.faces(f, 2));
    out.row(static_cast<Eigen::Index>(i)) = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c;
    if (face_ids) (*face_ids)[i] = static_cast<int>(f);
  }
  return PointCloud(std::move(out));
}

PointCloud normalize(const PointCloud& cloud) {
  const Eigen::RowVector3d centroid = cloud.points().colwise().mean();
  Points centered = cloud.points().rowwise() - centroid;
  const double radius = centered.rowwise().norm().maxCoeff();
  if (radius > 0.0) centered /= radius;
  return PointCloud(std::move(centered));
}

Axis parse_axis(std::string_view name) {
  if (name == "x") return Axis::x;
  if (name == "y") return Axis::y;
  if (name == "z") return Axis::z;
  throw ConfigError("unknown rotation axis '" + std::string(name) + "'");
}

Eigen::Matrix3d rotation_about(Axis axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  const int i = (static_cast<int>(axis) + 1) % 3;
  const int j = (static_cast<int>(axis) + 2) % 3;
  r(i, i) = c;
  r(i, j) = -s;
  r(j, i) = s;
  r(j, j) = c;
  return r;
}

AugmentDraw draw_augmentation(std::mt19937_64& rng, std::size_t n, const AugmentConfig& cfg) {
  if (cfg.jitter_sigma < 0.0 || cfg.jitter_clip < 0.0) {
    throw ConfigError("jitter sigma and clip must be non-negative");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw draw;
  draw.rotation = rotation_about(cfg.axis, unit(rng) * cfg.max_angle);
  draw.noise = Points::Zero(static_cast<Eigen::Index>(n), 3);
  if (cfg.jitter_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, cfg.jitter_sigma);
    for (Eigen::Index i = 0; i < draw.noise.rows(); ++i) {
      for (Eigen::Index k = 0; k < 3; ++k) {
        draw.noise(i, k) = std::clamp(gauss(rng), -cfg.jitter_clip, cfg.jitter_clip);
      }
    }
  }
  return draw;
}

PointCloud augment(const PointCloud& cloud, std::uint64_t seed, const AugmentConfig& cfg) {
  std::mt19937_64 rng(seed);
  const AugmentDraw draw = draw_augmentation(rng, cloud.size(), cfg);
  Points out = cloud.points() * draw.rotation.transpose() + draw.noise;
  return PointCloud(std::move(out));
}

SyntheticShape parse_shape(std::string_view name) {
  if (name == "sphere") return SyntheticShape::sphere;
  if (name == "cube") return SyntheticShape::cube;
  if (name == "cylinder") return SyntheticShape::cylinder;
  if (name == "two-box-chair") return SyntheticShape::two_box_chair;
  throw ConfigError("unknown synthetic shape '" + std::string(name) + "'");
}

std::string_view shape_name(SyntheticShape shape) {
  switch (shape) {
    case SyntheticShape::sphere: return "sphere";
    case SyntheticShape::cube: return "cube";
    case SyntheticShape::cylinder: return "cylinder";
    case SyntheticShape::two_box_chair: return "two-box-chair";
  }
  return "unknown";
}

TriangleMesh make_box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  TriangleMesh mesh;
  mesh.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    mesh.vertices(i, 0) = (i & 1) ? hi.x() : lo.x();
    mesh.vertices(i, 1) = (i & 2) ? hi.y() : lo.y();
    mesh.vertices(i, 2) = (i & 4) ? hi.z() : lo.z();
  }
  mesh.faces.resize(12, 3);
  mesh.faces << 0, 2, 3, 0, 3, 1,  // z = lo
      4, 5, 7, 4, 7, 6,            // z = hi
      0, 1, 5, 0, 5, 4,            // y = lo
      2, 6, 7, 2, 7, 3,            // y = hi
      0, 4, 6, 0, 6, 2,            // x = lo
      1, 3, 7, 1, 7, 5;            // x = hi
  return mesh;
}

namespace {

// Sphere, cylinder and cube samples come in antipodal pairs (plus one zero-sum
// triple for odd n) so the sample centroid is exactly the shape center.
Points sample_sphere(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_unit = [&] {
    Eigen::RowVector3d p;
    do {
      p << gauss(rng), gauss(rng), gauss(rng);
    } while (p.norm() < 1e-12);
    return Eigen::RowVector3d(p / p.norm());
  };
  Points out(static_cast<Eigen::Index>(n), 3);
  Eigen::Index i = 0;
  if (n % 2 == 1) {
    const Eigen::RowVector3d a = draw_unit();
    if (n == 1) {
      out.row(0) = a;
      return out;
    }
    Eigen::Vector3d axis = draw_unit().transpose();
    axis = (axis - axis.dot(a.transpose()) * a.transpose());
    if (axis.norm() < 1e-9) axis = a.transpose().unitOrthogonal();
    axis.normalize();
    const Eigen::AngleAxisd step(2.0 * std::numbers::pi / 3.0, axis);
    const Eigen::RowVector3d b = (step * a.transpose()).transpose();
    out.row(i++) = a;
    out.row(i++) = b;
    out.row(i++) = -(a + b);
  }
  while (i < out.rows()) {
    const Eigen::RowVector3d p = draw_unit();
    out.row(i++) = p;
    out.row(i++) = -p;
  }
  return out;
}

Points sample_cylinder(std::size_t n, std::mt19937_64& rng) {
  // radius 1, height 2: lateral area 4*pi, each cap pi
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] {
    const double pick = unit(rng) * 6.0;
    const double theta = unit(rng) * 2.0 * std::numbers::pi;
    if (pick < 4.0) return Eigen::RowVector3d(std::cos(theta), 2.0 * unit(rng) - 1.0, std::sin(theta));
    const double r = std::sqrt(unit(rng));
    const double y = pick < 5.0 ? -1.0 : 1.0;
    return Eigen::RowVector3d(r * std::cos(theta), y, r * std::sin(theta));
  };
  Points out(static_cast<Eigen::Index>(n), 3);
  Eigen::Index i = 0;
  if (n % 2 == 1) out.row(i++) = draw();
  while (i < out.rows()) {
    const Eigen::RowVector3d p = draw();
    out.row(i++) = p;
    out.row(i++) = -p;
  }
  return out;
}

Points sample_cube(std::size_t n, std::mt19937_64& rng) {
  // six faces of [-1, 1]^3, equal area
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] {
    const auto face = static_cast<int>(unit(rng) * 6.0) % 6;
    Eigen::RowVector3d p(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0);
    p(face / 2) = face % 2 == 0 ? -1.0 : 1.0;
    return p;
  };
  Points out(static_cast<Eigen::Index>(n), 3);
  Eigen::Index i = 0;
  if (n == 1) {
    out.row(0) = draw();
    return out;
  }
  if (n % 2 == 1) {
    out.row(i++) << 1.0, -0.5, 0.0;
    out.row(i++) << -1.0, -0.5, 0.0;
    out.row(i++) << 0.0, 1.0, 0.0;
  }
  while (i < out.rows()) {
    const Eigen::RowVector3d p = draw();
    out.row(i++) = p;
    out.row(i++) = -p;
  }
  return out;
}

TriangleMesh two_box_chair_mesh() {
  const TriangleMesh seat = make_box_mesh({-0.5, -0.05, -0.5}, {0.5, 0.05, 0.5});
  const TriangleMesh back = make_box_mesh({-0.5, 0.05, 0.4}, {0.5, 0.95, 0.5});
  TriangleMesh mesh;
  mesh.vertices.resize(16, 3);
  mesh.vertices << seat.vertices, back.vertices;
  mesh.faces.resize(24, 3);
  mesh.faces << seat.faces, (back.faces.array() + 8).matrix();
  return mesh;
}

}  // namespace

PointCloud make_synthetic(SyntheticShape shape, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DataError("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  switch (shape) {
    case SyntheticShape::sphere:
      return normalize(PointCloud(sample_sphere(n, rng)));
    case SyntheticShape::cylinder:
      return normalize(PointCloud(sample_cylinder(n, rng)));
    case SyntheticShape::cube:
      return normalize(PointCloud(sample_cube(n, rng)));
    case SyntheticShape::two_box_chair:
      return normalize(sample_mesh_uniform(two_box_chair_mesh(), n, rng()));
  }
  throw ConfigError("unknown synthetic shape");
}

PointCloud make_synthetic(std::string_view shape, std::size_t n, std::uint64_t seed) {
  return make_synthetic(parse_shape(shape), n, seed);
}

}  // namespace patchgen
