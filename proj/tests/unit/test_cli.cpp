#include "doctest.h"

#include "json.hpp"
#include "patchgen/cli/commands.hpp"
#include "patchgen/cli/plot.hpp"
#include "patchgen/core/io.hpp"
#include "patchgen/core/sampling.hpp"
#include "patchgen/metrics/metrics.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <initializer_list>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace patchgen;
using nlohmann::json;

namespace {

int run(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"patchgen"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());
  // Errors go to stderr; keep test output readable.
  std::ostringstream sink;
  auto* old = std::cerr.rdbuf(sink.rdbuf());
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old);
  return code;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("patchgen_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json toy_config(int epochs) {
  return json{{"generator",
               {{"kind", "dual_trans"},
                {"patches", 4},
                {"points", 256},
                {"latent_dim", 8},
                {"dual_model_dim", 16},
                {"dual_pairs", 1},
                {"dual_point_heads", 2},
                {"patch_heads", 2},
                {"ffn_multiplier", 2}}},
              {"encoder", {{"widths", {16, 32}}}},
              {"discriminator", {{"widths", {16, 32}}, {"head_hidden", 16}, {"contrast_dim", 8}}},
              {"data", {{"count", 8}}},
              {"batch_size", 4},
              {"epochs", epochs},
              {"seed", 3},
              {"snapshot_epochs", json::array()},
              {"checkpoint_every", 1}};
}

// One shared 2-epoch run; later cases read from it.
const fs::path& trained_run() {
  static const fs::path run_dir = [] {
    const fs::path d = fresh_dir("run");
    write_json(d / "config.in.json", toy_config(2));
    REQUIRE(run({"train", "--config", (d / "config.in.json").string(), "--out", (d / "out").string()}) == 0);
    return d / "out";
  }();
  return run_dir;
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::vector<std::vector<double>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

metrics::DistanceMatrix to_matrix(const std::vector<std::vector<double>>& rows, metrics::DistanceKind kind) {
  metrics::DistanceMatrix dm;
  dm.kind = kind;
  dm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return dm;
}

void write_sphere_set(const fs::path& dir, int count, int n, std::uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const PointCloud c = make_synthetic(SyntheticShape::sphere, static_cast<std::size_t>(n), seed * 1000 + static_cast<std::uint64_t>(i)).rounded_to_f32();
    char name[32];
    std::snprintf(name, sizeof(name), "c%03d.pcpf", i);
    io::write_cloud(dir / name, c, io::CloudFormat::binary);
  }
}

}  // namespace

TEST_CASE("version and usage errors") {
  CHECK(run({"--version"}) == 0);
  CHECK(run({}) == cli::kConfigError);
  CHECK(run({"train"}) == cli::kConfigError);
  CHECK(run({"frobnicate"}) == cli::kConfigError);
}

TEST_CASE("standalone binary reports its exit codes") {
  CHECK(std::system((std::string(PATCHGEN_CLI_PATH) + " --version > /dev/null").c_str()) == 0);
  const int status = std::system((std::string(PATCHGEN_CLI_PATH) + " eval 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(status) == cli::kConfigError);
}

TEST_CASE("train writes a run directory with a complete manifest") {
  const fs::path out = trained_run();
  for (const char* f : {"config.json", "losses.csv", "probe_z.pgem", "checkpoints/epoch_0001.pgck",
                        "checkpoints/epoch_0002.pgck", "manifest.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  std::ifstream losses(out / "losses.csv");
  std::string line;
  int rows = -1;
  while (std::getline(losses, line)) ++rows;
  CHECK(rows == 2);

  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["version"] == cli::kVersion);
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(!m["artifacts"].empty());
  for (const auto& a : m["artifacts"]) CHECK(fs::exists(out / a.get<std::string>()));
}

TEST_CASE("train rejects bad configs with exit code 2") {
  const fs::path d = fresh_dir("badcfg");
  json typo = toy_config(1);
  typo["generator"]["pathces"] = 4;
  write_json(d / "typo.json", typo);
  CHECK(run({"train", "--config", (d / "typo.json").string(), "--out", (d / "a").string()}) == cli::kConfigError);

  json kind = toy_config(1);
  kind["generator"]["kind"] = "graph_conv";
  write_json(d / "kind.json", kind);
  CHECK(run({"train", "--config", (d / "kind.json").string(), "--out", (d / "b").string()}) == cli::kConfigError);

  std::ofstream(d / "broken.json") << "{ \"epochs\": ";
  CHECK(run({"train", "--config", (d / "broken.json").string(), "--out", (d / "c").string()}) == cli::kConfigError);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  const fs::path d = fresh_dir("resume");
  write_json(d / "one.json", toy_config(1));
  write_json(d / "two.json", toy_config(2));
  REQUIRE(run({"train", "--config", (d / "one.json").string(), "--out", (d / "r").string()}) == 0);
  REQUIRE(run({"train", "--config", (d / "two.json").string(), "--out", (d / "r").string(), "--resume",
               (d / "r" / "checkpoints" / "epoch_0001.pgck").string()}) == 0);
  const fs::path straight = trained_run();
  CHECK(slurp(d / "r" / "checkpoints" / "epoch_0002.pgck") == slurp(straight / "checkpoints" / "epoch_0002.pgck"));
  CHECK(slurp(d / "r" / "losses.csv") == slurp(straight / "losses.csv"));
}

TEST_CASE("sample writes deterministic clouds with partitioned patch ids") {
  const fs::path ckpt = trained_run() / "checkpoints" / "epoch_0002.pgck";
  const fs::path d = fresh_dir("sample");
  REQUIRE(run({"sample", "--checkpoint", ckpt.string(), "--num", "16", "--seed", "9", "--out", (d / "a").string()}) == 0);
  REQUIRE(run({"sample", "--checkpoint", ckpt.string(), "--num", "16", "--seed", "9", "--out", (d / "b").string()}) == 0);
  REQUIRE(run({"sample", "--checkpoint", ckpt.string(), "--num", "2", "--seed", "10", "--out", (d / "c").string()}) == 0);
  const auto clouds = io::list_files(d / "a", ".pcpf");
  const auto ids = io::list_files(d / "a", ".pid");
  CHECK(clouds.size() == 16);
  CHECK(ids.size() == 16);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    CHECK(slurp(clouds[i]) == slurp(d / "b" / clouds[i].filename()));
    CHECK(io::read_cloud(clouds[i]).size() == 256);
    const auto pid = io::read_patch_ids(ids[i]);
    REQUIRE(pid.size() == 256);
    std::vector<int> per(4, 0);
    for (auto p : pid) {
      REQUIRE(p < 4);
      ++per[p];
    }
    CHECK(per == std::vector<int>{64, 64, 64, 64});
  }
  CHECK(slurp(clouds[0]) != slurp(d / "c" / clouds[0].filename()));
  const json m = json::parse(slurp(d / "a" / "manifest.json"));
  CHECK(m["artifacts"].size() == 32);
  CHECK(m["seed"] == 9);

  CHECK(run({"sample", "--checkpoint", (d / "missing.pgck").string(), "--out", (d / "x").string()}) == cli::kDataError);
  std::ofstream(d / "junk.pgck") << "not a checkpoint";
  CHECK(run({"sample", "--checkpoint", (d / "junk.pgck").string(), "--out", (d / "y").string()}) == cli::kDataError);
}

TEST_CASE("eval reports metrics and exports matrices that reproduce them") {
  const fs::path d = fresh_dir("eval");
  write_sphere_set(d / "gen", 6, 64, 1);
  write_sphere_set(d / "ref", 5, 64, 2);

  REQUIRE(run({"eval", "--generated", (d / "gen").string(), "--reference", (d / "gen").string(), "--out",
               (d / "self.json").string()}) == 0);
  const json self = json::parse(slurp(d / "self.json"));
  CHECK(self["cov_cd"].get<double>() == 1.0);
  CHECK(self["cov_emd"].get<double>() == 1.0);
  CHECK(self["jsd"].get<double>() < 1e-9);
  CHECK(self["scaled"] == false);

  REQUIRE(run({"eval", "--generated", (d / "gen").string(), "--reference", (d / "ref").string(), "--out",
               (d / "r.json").string(), "--matrices", (d / "m").string()}) == 0);
  REQUIRE(run({"eval", "--generated", (d / "gen").string(), "--reference", (d / "ref").string(), "--out",
               (d / "s.json").string(), "--scaled"}) == 0);
  const json r = json::parse(slurp(d / "r.json"));
  const json s = json::parse(slurp(d / "s.json"));
  CHECK(s["scaled"] == true);
  CHECK(s["mmd_cd"].get<double>() == doctest::Approx(r["mmd_cd"].get<double>() * 1e3).epsilon(1e-12));
  CHECK(s["jsd"].get<double>() == doctest::Approx(r["jsd"].get<double>() * 1e2).epsilon(1e-12));
  CHECK(s["cov_emd"].get<double>() == doctest::Approx(r["cov_emd"].get<double>() * 1e2).epsilon(1e-12));

  using metrics::DistanceKind;
  metrics::EvaluationMatrices m;
  m.gen_ref_cd = to_matrix(read_csv(d / "m" / "gen_ref_cd.csv"), DistanceKind::cd);
  m.gen_ref_emd = to_matrix(read_csv(d / "m" / "gen_ref_emd.csv"), DistanceKind::emd);
  m.gen_gen_cd = to_matrix(read_csv(d / "m" / "gen_gen_cd.csv"), DistanceKind::cd);
  m.gen_gen_emd = to_matrix(read_csv(d / "m" / "gen_gen_emd.csv"), DistanceKind::emd);
  m.ref_ref_cd = to_matrix(read_csv(d / "m" / "ref_ref_cd.csv"), DistanceKind::cd);
  m.ref_ref_emd = to_matrix(read_csv(d / "m" / "ref_ref_emd.csv"), DistanceKind::emd);
  CHECK(m.gen_ref_cd.values.rows() == 6);
  CHECK(m.gen_ref_cd.values.cols() == 5);
  const auto again = metrics::report_from_matrices(m, r["jsd"].get<double>(), metrics::EmdMode::exact);
  for (const auto& [key, value] : std::initializer_list<std::pair<const char*, double>>{
           {"mmd_cd", again.mmd_cd}, {"mmd_emd", again.mmd_emd}, {"cov_cd", again.cov_cd},
           {"cov_emd", again.cov_emd}, {"nna_cd", again.nna_cd}, {"nna_emd", again.nna_emd}})
    CHECK_MESSAGE(std::abs(value - r[key].get<double>()) <= 1e-9, key);

  write_sphere_set(d / "other", 3, 32, 4);
  CHECK(run({"eval", "--generated", (d / "gen").string(), "--reference", (d / "other").string(), "--out",
             (d / "bad.json").string()}) == cli::kDataError);
  fs::create_directories(d / "empty");
  CHECK(run({"eval", "--generated", (d / "empty").string(), "--reference", (d / "ref").string(), "--out",
             (d / "bad2.json").string()}) == cli::kDataError);
}

TEST_CASE("probe decodes the fixed latent at the requested checkpoints") {
  const fs::path d = fresh_dir("probe");
  write_json(d / "cfg.json", toy_config(10));
  REQUIRE(run({"train", "--config", (d / "cfg.json").string(), "--out", (d / "run").string()}) == 0);
  REQUIRE(run({"probe", "--run", (d / "run").string(), "--epochs", "1,10"}) == 0);
  CHECK(io::list_files(d / "run" / "snapshots", ".pcpf").size() == 2);
  CHECK(io::list_files(d / "run" / "snapshots", ".pid").size() == 2);
  const auto files = io::list_files(d / "run" / "snapshots", ".pcpf");
  CHECK(slurp(files[0]) != slurp(files[1]));
  CHECK(run({"probe", "--run", (d / "run").string(), "--epochs", "11"}) == cli::kDataError);
}

TEST_CASE("plot renders one legend entry per patch and is deterministic") {
  const fs::path d = fresh_dir("plot");
  const PointCloud c = make_synthetic(SyntheticShape::two_box_chair, 256, 2).rounded_to_f32();
  io::write_cloud(d / "c.pcpf", c, io::CloudFormat::binary);
  std::vector<std::uint16_t> ids(256);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint16_t>(i / 32);
  io::write_patch_ids(d / "c.pid", ids);
  REQUIRE(run({"plot", "--in", (d / "c.pcpf").string(), "--ids", (d / "c.pid").string(), "--out",
               (d / "a.svg").string()}) == 0);
  REQUIRE(run({"plot", "--in", (d / "c.pcpf").string(), "--ids", (d / "c.pid").string(), "--out",
               (d / "b.svg").string()}) == 0);
  const std::string svg = slurp(d / "a.svg");
  CHECK(svg == slurp(d / "b.svg"));
  std::size_t legends = 0;
  for (std::size_t pos = svg.find("<g class=\"legend\">"); pos != std::string::npos;
       pos = svg.find("<g class=\"legend\">", pos + 1))
    ++legends;
  CHECK(legends == 8);
  std::set<std::string> colors;
  for (std::uint16_t k = 0; k < 8; ++k) colors.insert(cli::patch_color(k));
  CHECK(colors.size() == 8);
  for (const auto& col : colors) CHECK(svg.find(col) != std::string::npos);

  io::write_patch_ids(d / "short.pid", std::vector<std::uint16_t>(10, 0));
  CHECK(run({"plot", "--in", (d / "c.pcpf").string(), "--ids", (d / "short.pid").string(), "--out",
             (d / "c.svg").string()}) == cli::kDataError);
}

TEST_CASE("embed writes one critic embedding per cloud") {
  const fs::path d = fresh_dir("embed");
  json cfg = toy_config(1);
  cfg.erase("discriminator");
  cfg["generator"]["points"] = 64;
  cfg["data"]["count"] = 2;
  cfg["batch_size"] = 2;
  write_json(d / "cfg.json", cfg);
  REQUIRE(run({"train", "--config", (d / "cfg.json").string(), "--out", (d / "run").string()}) == 0);
  write_sphere_set(d / "clouds", 4, 64, 7);
  REQUIRE(run({"embed", "--checkpoint", (d / "run" / "checkpoints" / "epoch_0001.pgck").string(), "--in",
               (d / "clouds").string(), "--out", (d / "emb").string()}) == 0);
  const auto files = io::list_files(d / "emb", ".pgem");
  REQUIRE(files.size() == 4);
  std::set<std::vector<float>> distinct;
  for (const auto& f : files) {
    const auto v = io::read_embedding(f);
    CHECK(v.size() == 1024);
    for (float x : v) REQUIRE(std::isfinite(x));
    distinct.insert(v);
  }
  CHECK(distinct.size() == 4);
  CHECK(fs::exists(d / "emb" / "manifest.json"));
}

TEST_CASE("complexity prints the parameter table") {
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  const int code = run({"complexity", "--generator", "mlp", "--patches", "1,8"});
  std::cout.rdbuf(old);
  CHECK(code == 0);
  CHECK(captured.str().find("27203") != std::string::npos);
  CHECK(captured.str().find(std::to_string(27203 * 8)) != std::string::npos);
  CHECK(run({"complexity", "--generator", "gru"}) == cli::kConfigError);
}
