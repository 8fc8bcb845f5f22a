#include "patchgen/cli/commands.hpp"

#include "patchgen/cli/plot.hpp"
#include "patchgen/core/io.hpp"
#include "patchgen/metrics/metrics.hpp"
#include "patchgen/train/complexity.hpp"
#include "patchgen/train/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace patchgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Records a finished command; every listed artifact must exist.
void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, const std::vector<fs::path>& artifacts) {
  json j;
  j["command"] = command;
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a(config_text)));
  j["config_hash"] = hash;
  j["seed"] = seed;
  j["version"] = kVersion;
  json list = json::array();
  for (const auto& a : artifacts) {
    if (!fs::exists(a)) throw DataError("expected artifact missing: " + a.string());
    list.push_back(fs::relative(a, dir).generic_string());
  }
  j["artifacts"] = list;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<fs::path> files_in(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PointCloud> read_clouds(const fs::path& dir) {
  std::vector<PointCloud> clouds;
  for (const auto& f : cloud_files(dir)) clouds.push_back(io::read_cloud(f));
  if (clouds.empty()) throw DataError("no cloud files in " + dir.string());
  return clouds;
}

std::string sample_stem(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", i);
  return buf;
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<fs::path> cloud_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const char* ext : {".pcpf", ".bin", ".xyz", ".txt"}) {
    const auto found = io::list_files(dir, ext);
    files.insert(files.end(), found.begin(), found.end());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void cmd_train(const TrainArgs& args) {
  const train::TrainConfig cfg = train::load_config(args.config);
  const Dataset data = train::load_dataset(cfg);
  train::run_training(cfg, data, args.out, args.resume);
  write_manifest(args.out, "train", train::config_to_json(cfg).dump(), cfg.seed, files_in(args.out));
}

void cmd_sample(const SampleArgs& args) {
  if (args.num < 1) throw ConfigError("--num must be at least 1");
  const train::Trainer trainer = train::Trainer::load_checkpoint(args.checkpoint);
  const auto& cfg = trainer.config();
  fs::create_directories(args.out);
  std::mt19937_64 rng(args.seed);
  std::vector<fs::path> artifacts;
  for (int i = 0; i < args.num; ++i) {
    const nn::Matrix z = model::standard_normal(cfg.generator.latent_dim, 1, rng);
    const model::LatentCode code{Eigen::VectorXd(z.col(0)), model::LatentCode::Origin::prior};
    const train::Snapshot snap = train::decode_snapshot(trainer.networks(), code);
    const fs::path cloud = args.out / (sample_stem(i) + ".pcpf");
    const fs::path ids = args.out / (sample_stem(i) + ".pid");
    io::write_cloud(cloud, snap.cloud, io::CloudFormat::binary);
    io::write_patch_ids(ids, snap.patch_ids);
    artifacts.push_back(cloud);
    artifacts.push_back(ids);
  }
  write_manifest(args.out, "sample", train::config_to_json(cfg).dump(), args.seed, artifacts);
}

void cmd_eval(const EvalArgs& args) {
  const auto gen = read_clouds(args.generated);
  const auto ref = read_clouds(args.reference);
  metrics::EvaluationMatrices m;
  const metrics::MetricReport report = metrics::evaluate(gen, ref, args.scaled, &m);
  write_text(args.out, report.to_json() + "\n");
  if (args.matrices) {
    fs::create_directories(*args.matrices);
    write_text(*args.matrices / "gen_ref_cd.csv", metrics::matrix_csv(m.gen_ref_cd));
    write_text(*args.matrices / "gen_ref_emd.csv", metrics::matrix_csv(m.gen_ref_emd));
    write_text(*args.matrices / "gen_gen_cd.csv", metrics::matrix_csv(m.gen_gen_cd));
    write_text(*args.matrices / "gen_gen_emd.csv", metrics::matrix_csv(m.gen_gen_emd));
    write_text(*args.matrices / "ref_ref_cd.csv", metrics::matrix_csv(m.ref_ref_cd));
    write_text(*args.matrices / "ref_ref_emd.csv", metrics::matrix_csv(m.ref_ref_emd));
  }
}

void cmd_probe(const ProbeArgs& args) {
  if (args.epochs.empty()) throw ConfigError("--epochs needs at least one epoch");
  const auto zf = io::read_embedding(args.run / "probe_z.pgem");
  Eigen::VectorXd z(static_cast<Eigen::Index>(zf.size()));
  for (std::size_t i = 0; i < zf.size(); ++i) z(static_cast<Eigen::Index>(i)) = zf[i];
  const model::LatentCode code{z, model::LatentCode::Origin::prior};
  for (int e : args.epochs) {
    const fs::path ckpt = args.run / "checkpoints" / train::checkpoint_name(e);
    if (!fs::exists(ckpt)) throw DataError("missing checkpoint " + ckpt.string());
    const train::Trainer trainer = train::Trainer::load_checkpoint(ckpt);
    train::write_snapshot(args.run, e, train::decode_snapshot(trainer.networks(), code));
  }
}

void cmd_plot(const PlotArgs& args) {
  const PointCloud cloud = io::read_cloud(args.in);
  std::vector<std::uint16_t> ids;
  if (args.ids) ids = io::read_patch_ids(*args.ids);
  PlotOptions opts;
  opts.azimuth_deg = args.azimuth;
  opts.elevation_deg = args.elevation;
  opts.title = args.in.filename().string();
  write_text(args.out, render_svg(cloud, ids, opts));
}

void cmd_embed(const EmbedArgs& args) {
  const train::Trainer trainer = train::Trainer::load_checkpoint(args.checkpoint);
  const auto files = cloud_files(args.in);
  if (files.empty()) throw DataError("no cloud files in " + args.in.string());
  fs::create_directories(args.out);
  auto& store = const_cast<nn::ParameterStore&>(trainer.networks().critic_store);
  std::vector<fs::path> artifacts;
  for (const auto& f : files) {
    const Eigen::VectorXf e = trainer.networks().critic.extract_embedding(io::read_cloud(f), store).cast<float>();
    const fs::path out = args.out / (f.stem().string() + ".pgem");
    io::write_embedding(out, std::span<const float>(e.data(), static_cast<std::size_t>(e.size())));
    artifacts.push_back(out);
  }
  write_manifest(args.out, "embed", train::config_to_json(trainer.config()).dump(), trainer.config().seed, artifacts);
}

std::string cmd_complexity(const ComplexityArgs& args) {
  std::vector<model::GeneratorKind> kinds;
  for (const auto& g : args.generators) kinds.push_back(model::parse_generator_kind(g));
  std::vector<Eigen::Index> ks(args.patches.begin(), args.patches.end());
  model::GeneratorConfig base;
  base.points = args.points;
  return train::format_complexity(train::complexity_report(base, kinds, ks));
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Patch-based point cloud generation: training, sampling and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", train_args.config, "Config file")->required();
  train->add_option("--out", train_args.out, "Run directory")->required();
  train->add_option("--resume", train_args.resume, "Checkpoint to resume from");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "Decode random latent codes");
  sample->add_option("--checkpoint", sample_args.checkpoint)->required();
  sample->add_option("--num", sample_args.num, "Number of clouds");
  sample->add_option("--seed", sample_args.seed);
  sample->add_option("--out", sample_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Compare generated and reference clouds");
  eval->add_option("--generated", eval_args.generated)->required();
  eval->add_option("--reference", eval_args.reference)->required();
  eval->add_flag("--scaled", eval_args.scaled, "Report JSD/MMD-EMD x1e2, MMD-CD x1e3, COV/1-NNA in percent");
  eval->add_option("--out", eval_args.out, "Report JSON path")->required();
  eval->add_option("--matrices", eval_args.matrices, "Directory for distance-matrix CSV files");

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "Re-decode the fixed probe code at stored checkpoints");
  probe->add_option("--run", probe_args.run)->required();
  probe->add_option("--epochs", probe_args.epochs)->required()->delimiter(',');

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Render a cloud as a patch-colored SVG scatter");
  plot->add_option("--in", plot_args.in)->required();
  plot->add_option("--ids", plot_args.ids, "Patch-id file");
  plot->add_option("--out", plot_args.out)->required();
  plot->add_option("--azimuth", plot_args.azimuth);
  plot->add_option("--elevation", plot_args.elevation);

  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Export pooled critic features");
  embed->add_option("--checkpoint", embed_args.checkpoint)->required();
  embed->add_option("--in", embed_args.in, "Directory of clouds")->required();
  embed->add_option("--out", embed_args.out, "Output directory (one .pgem per cloud)")->required();

  ComplexityArgs complexity_args;
  auto* complexity = app.add_subcommand("complexity", "Print exact generator parameter counts");
  complexity->add_option("--generator", complexity_args.generators)->delimiter(',');
  complexity->add_option("--patches", complexity_args.patches)->delimiter(',');
  complexity->add_option("--points", complexity_args.points);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) cmd_train(train_args);
    if (*sample) cmd_sample(sample_args);
    if (*eval) cmd_eval(eval_args);
    if (*probe) cmd_probe(probe_args);
    if (*plot) cmd_plot(plot_args);
    if (*embed) cmd_embed(embed_args);
    if (*complexity) std::cout << cmd_complexity(complexity_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace patchgen::cli
