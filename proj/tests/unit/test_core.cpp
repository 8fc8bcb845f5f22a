#include "doctest.h"
#include "test_util.hpp"

#include "patchgen/core/io.hpp"
#include "patchgen/core/sampling.hpp"

#include <filesystem>
#include <cstring>
#include <fstream>
#include <numeric>

using namespace patchgen;
using patchgen::testing::random_points;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("patchgen_core_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TriangleMesh two_triangles(double area_a, double area_b) {
  TriangleMesh m;
  m.vertices.resize(6, 3);
  m.vertices << 0, 0, 0, 2 * area_a, 0, 0, 0, 1, 0,  //
      5, 0, 0, 5 + 2 * area_b, 0, 0, 5, 1, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 3, 4, 5;
  return m;
}

double max_pairwise_change(const Points& a, const Points& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
      worst = std::max(worst, std::fabs((a.row(i) - a.row(j)).norm() - (b.row(i) - b.row(j)).norm()));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("point cloud rejects empty and non-finite input") {
  CHECK_THROWS_AS(PointCloud(Points(0, 3)), DataError);
  Points p = Points::Zero(2, 3);
  p(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PointCloud{p}, DataError);
  CHECK_THROWS_AS(PointCloudBatch({PointCloud(Points::Zero(2, 3)), PointCloud(Points::Zero(3, 3))}), DataError);
}

TEST_CASE("batch stacking keeps cloud order") {
  std::mt19937_64 rng(1);
  const PointCloud a(random_points(4, rng)), b(random_points(4, rng));
  const Points s = PointCloudBatch({a, b}).stacked();
  CHECK(s.topRows(4) == a.points());
  CHECK(s.bottomRows(4) == b.points());
}

TEST_CASE("single triangle samples stay inside the triangle") {
  TriangleMesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PointCloud c = sample_mesh_uniform(m, 1, seed);
    const auto p = c.point(0);
    CHECK(p(0) >= 0.0);
    CHECK(p(1) >= 0.0);
    CHECK(p(0) + p(1) <= 1.0 + 1e-12);
    CHECK(p(2) == 0.0);
  }
}

TEST_CASE("area-weighted sampling matches the area ratio") {
  std::vector<int> faces;
  sample_mesh_uniform(two_triangles(1.0, 3.0), 40000, 7, &faces);
  const double large = static_cast<double>(std::count(faces.begin(), faces.end(), 1)) / 40000.0;
  CHECK(std::fabs(large - 0.75) <= 0.01);
}

TEST_CASE("per-face fractions pass a chi-square test over ten triangles") {
  TriangleMesh m;
  m.vertices.resize(30, 3);
  m.faces.resize(10, 3);
  std::vector<double> areas;
  for (int f = 0; f < 10; ++f) {
    const double w = 0.5 + 0.37 * f;  // right triangle with legs w and 1
    m.vertices.row(3 * f) << 10.0 * f, 0, 0;
    m.vertices.row(3 * f + 1) << 10.0 * f + w, 0, 0;
    m.vertices.row(3 * f + 2) << 10.0 * f, 1, 0;
    m.faces.row(f) << 3 * f, 3 * f + 1, 3 * f + 2;
    areas.push_back(0.5 * w);
  }
  const double total_area = std::accumulate(areas.begin(), areas.end(), 0.0);
  const int n = 100000;
  std::vector<int> faces;
  sample_mesh_uniform(m, n, 11, &faces);
  double chi2 = 0.0;
  for (int f = 0; f < 10; ++f) {
    const double expected = n * areas[static_cast<std::size_t>(f)] / total_area;
    const double observed = static_cast<double>(std::count(faces.begin(), faces.end(), f));
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  // Upper 0.001 quantile of chi-square with 9 degrees of freedom.
  CHECK(chi2 < 27.877);
}

TEST_CASE("sampling is deterministic and rejects degenerate meshes") {
  const auto m = two_triangles(1.0, 2.0);
  CHECK(sample_mesh_uniform(m, 100, 3).points() == sample_mesh_uniform(m, 100, 3).points());
  TriangleMesh flat;
  flat.vertices.resize(3, 3);
  flat.vertices << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  flat.faces.resize(1, 3);
  flat.faces << 0, 1, 2;
  CHECK_THROWS_WITH_AS(sample_mesh_uniform(flat, 10, 0), doctest::Contains("degenerate mesh"), DataError);
}

TEST_CASE("normalize centers and scales to the unit ball") {
  Points two(2, 3);
  two << 2, 0, 0, 4, 0, 0;
  const Points out = normalize(PointCloud(two)).points();
  CHECK(out(0, 0) == doctest::Approx(-1.0));
  CHECK(out(1, 0) == doctest::Approx(1.0));

  std::mt19937_64 rng(5);
  const PointCloud c(random_points(100, rng, 3.0));
  const Points n = normalize(c).points();
  CHECK(n.colwise().mean().norm() < 1e-7);
  CHECK(std::fabs(n.rowwise().norm().maxCoeff() - 1.0) < 1e-7);
  CHECK((normalize(PointCloud(n)).points() - n).cwiseAbs().maxCoeff() < 1e-7);

  Points moved = c.points() * 2.5;
  moved.rowwise() += Eigen::RowVector3d(1.0, -3.0, 0.5);
  CHECK((normalize(PointCloud(moved)).points() - n).cwiseAbs().maxCoeff() < 1e-6);

  const Points same = Points::Constant(4, 3, 2.0);
  CHECK(normalize(PointCloud(same)).points().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("augmentation: identity, isometry and bounded jitter") {
  std::mt19937_64 rng(8);
  const PointCloud c(random_points(40, rng));
  AugmentConfig identity;
  identity.jitter_sigma = 0.0;
  identity.max_angle = 0.0;
  CHECK(augment(c, 3, identity).points() == c.points());

  AugmentConfig rot_only;
  rot_only.jitter_sigma = 0.0;
  CHECK(max_pairwise_change(c.points(), augment(c, 4, rot_only).points()) < 1e-6);

  AugmentConfig cfg;  // sigma 0.01, clip 0.05
  std::mt19937_64 draw_rng(12);
  const AugmentDraw draw = draw_augmentation(draw_rng, c.size(), cfg);
  const Points out = augment(c, 12, cfg).points();
  const Points residual = out - c.points() * draw.rotation.transpose();
  CHECK(residual.cwiseAbs().maxCoeff() <= 0.05);
  CHECK(residual.cwiseAbs().maxCoeff() > 0.0);
  CHECK(augment(c, 12, cfg).points() == out);
}

TEST_CASE("synthetic shapes lie on their surfaces") {
  const Points sphere = make_synthetic("sphere", 1000, 1).points();
  CHECK((sphere.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-6);

  const Points cube = make_synthetic("cube", 1000, 2).points();
  const double extent = cube.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < cube.rows(); ++i) {
    CHECK(std::fabs(cube.row(i).cwiseAbs().maxCoeff() - extent) < 1e-6);
  }

  const Points chair = make_synthetic("two-box-chair", 2048, 3).points();
  CHECK(chair.rows() == 2048);
  CHECK(chair.colwise().mean().norm() < 1e-6);

  const Points cyl = make_synthetic("cylinder", 501, 4).points();
  CHECK(cyl.rows() == 501);
  CHECK(std::fabs(cyl.rowwise().norm().maxCoeff() - 1.0) < 1e-9);

  CHECK_THROWS_AS(make_synthetic("torus", 10, 0), ConfigError);
}

TEST_CASE("binary cloud format round-trips bitwise") {
  std::mt19937_64 rng(9);
  const PointCloud c = PointCloud(random_points(2048, rng)).rounded_to_f32();
  const auto bytes = io::encode_cloud(c);
  CHECK(bytes.size() == 4 + 1 + 4 + 2048 * 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PCPF");
  CHECK(bytes[4] == 1);
  CHECK(io::decode_cloud(bytes).points() == c.points());

  const auto dir = temp_dir("binary");
  io::write_cloud(dir / "c.pcpf", c);
  CHECK(io::read_cloud(dir / "c.pcpf").points() == c.points());
}

TEST_CASE("binary cloud errors name the byte offset") {
  const PointCloud c(Points::Ones(2, 3));
  auto bytes = io::encode_cloud(c);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(io::decode_cloud(bad), doctest::Contains("bad magic at byte offset 0"), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 2);
  CHECK_THROWS_WITH_AS(io::decode_cloud(truncated), doctest::Contains("truncated payload at byte offset"), FormatError);
  auto nan = bytes;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 9 + 4, &q, 4);
  CHECK_THROWS_WITH_AS(io::decode_cloud(nan), doctest::Contains("non-finite value at byte offset 13"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(io::decode_cloud(extra), FormatError);
}

TEST_CASE("text cloud format") {
  CHECK(io::parse_cloud_text("0 0 0\n").size() == 1);
  const PointCloud c = io::parse_cloud_text("# header\n1 2 3\n  4.5 -6 7e-1 # trailing\n\n");
  CHECK(c.size() == 2);
  CHECK(c.point(1)(2) == doctest::Approx(0.7));
  CHECK_THROWS_AS(io::parse_cloud_text("1 2\n"), FormatError);
  CHECK_THROWS_AS(io::parse_cloud_text("1 2 nan\n"), FormatError);

  std::mt19937_64 rng(10);
  const PointCloud r(random_points(200, rng));
  const PointCloud back = io::parse_cloud_text(io::format_cloud_text(r));
  CHECK(back.points() == r.points());
}

TEST_CASE("patch ids and embeddings round-trip") {
  const auto dir = temp_dir("sideband");
  const std::vector<std::uint16_t> ids{0, 0, 1, 7, 65535};
  io::write_patch_ids(dir / "a.pid", ids);
  CHECK(io::read_patch_ids(dir / "a.pid") == ids);
  const auto raw = io::read_file_bytes(dir / "a.pid");
  CHECK(raw.size() == 4 + 4 + 2 * ids.size());
  CHECK(std::string(raw.begin(), raw.begin() + 4) == "PGID");

  const std::vector<float> emb{1.5F, -2.0F, 0.0F};
  io::write_embedding(dir / "e.pgem", emb);
  CHECK(io::read_embedding(dir / "e.pgem") == emb);
}

TEST_CASE("mesh ingestion keeps triangles") {
  const TriangleMesh off = io::parse_off("OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n");
  CHECK(off.faces.rows() == 2);
  const TriangleMesh obj = io::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\n");
  CHECK(obj.faces.rows() == 1);
  CHECK(obj.triangle_area(0) == doctest::Approx(0.5));
}
