#include "patchgen/train/trainer.hpp"

#include "patchgen/core/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace patchgen::train {

using losses::LossTerms;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

constexpr std::uint64_t kProbeSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kLoopSalt = 0xd1b54a32d192ed03ULL;

model::LatentCode make_probe(const TrainConfig& cfg) {
  model::LatentCode code = model::sample_prior(cfg.generator.latent_dim, cfg.seed ^ kProbeSalt);
  // Rounded so the stored f32 copy decodes to the same snapshot.
  code.z = code.z.cast<float>().cast<double>();
  return code;
}

void require_finite(const char* term, double value, int epoch, std::size_t batch) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + std::string(term) + " loss at epoch " + std::to_string(epoch + 1) +
                       ", batch " + std::to_string(batch));
  }
}

}  // namespace

Networks::Networks(const TrainConfig& cfg)
    : encoder(cfg.encoder), generator(cfg.generator), critic(cfg.discriminator) {}

void Networks::init(std::uint64_t seed) {
  gen_store = nn::ParameterStore();
  critic_store = nn::ParameterStore();
  std::mt19937_64 rng(seed);
  encoder.init(gen_store, rng);
  generator.init(gen_store, rng);
  critic.init(critic_store, rng);
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), nets_((cfg_.validate(), cfg_)), rng_(cfg_.seed ^ kLoopSalt) {
  nets_.init(cfg_.seed);
  probe_ = make_probe(cfg_);
}

LossTerms Trainer::train_batch(const Points& real, std::size_t clouds, std::size_t batch_index) {
  const Eigen::Index n = cfg_.generator.points;
  const auto b = static_cast<Eigen::Index>(clouds);
  const bool vae = cfg_.mode == TrainMode::vae_gan;
  const bool use_con = cfg_.weights.w_con > 0.0;
  auto& gs = nets_.gen_store;
  auto& cs = nets_.critic_store;
  gs.zero_grad();
  cs.zero_grad();
  LossTerms t;

  Tape gt;
  const Var x = gt.constant(Matrix(real));
  Var mu, logvar, fakes;
  if (vae) {
    const auto enc = nets_.encoder.forward(gt, gs, x, n);
    mu = enc.mu;
    logvar = enc.logvar;
    const Matrix eps = model::standard_normal(b, cfg_.generator.latent_dim, rng_);
    const Var z_e = model::reparameterize(mu, logvar, eps);
    const Var z_p = gt.constant(model::standard_normal(b, cfg_.generator.latent_dim, rng_));
    fakes = nets_.generator.forward(gt, gs, nn::concat_rows({z_e, z_p}));
  } else {
    fakes = nets_.generator.forward(gt, gs, gt.constant(model::standard_normal(b, cfg_.generator.latent_dim, rng_)));
  }
  const Eigen::Index nf = fakes.rows() / n;

  // Critic step on detached fakes.
  {
    Tape ct;
    Matrix stacked(real.rows() + fakes.rows(), 3);
    stacked << real, fakes.value();
    const auto out = nets_.critic.forward(ct, cs, ct.constant(std::move(stacked)), n);
    const Var l_real = nn::slice_rows(out.logit, 0, b);
    const auto gan = vae ? losses::gan_losses_vaegan(l_real, nn::slice_rows(out.logit, b, b),
                                                     nn::slice_rows(out.logit, 2 * b, b))
                         : losses::gan_loss_plain(l_real, nn::slice_rows(out.logit, b, b));
    t.critic_gan = gan.critic.item();
    require_finite("critic_gan", t.critic_gan, epoch_, batch_index);
    Var loss = gan.critic;
    if (use_con) {
      const Var aug = losses::augment_batch(ct.constant(fakes.value()), n, rng_, cfg_.augmentation);
      const Var positives = nets_.critic.forward(ct, cs, aug, n).embed;
      const Var con = losses::contrastive(nn::slice_rows(out.embed, b, nf), positives, cfg_.temperature);
      t.critic_contrastive = con.item();
      require_finite("critic_contrastive", t.critic_contrastive, epoch_, batch_index);
      loss = nn::add(loss, nn::scale(con, cfg_.weights.w_con));
    }
    ct.backward(loss);
    if (!cs.grads_finite()) throw NumericError("non-finite critic gradient at epoch " + std::to_string(epoch_ + 1));
    adam_step(cs, cfg_.optimizer);
  }

  // Generator/encoder step against the updated critic.
  gt.freeze(cs);
  std::vector<Var> parts;
  if (vae) parts.push_back(x);
  parts.push_back(fakes);
  if (use_con) parts.push_back(losses::augment_batch(fakes, n, rng_, cfg_.augmentation));
  const auto out = nets_.critic.forward(gt, cs, nn::concat_rows(parts), n);
  const Eigen::Index f0 = vae ? b : 0;  // first fake cloud row in the critic batch
  std::vector<std::pair<double, Var>> terms;
  if (vae) {
    const Var rec = nn::slice_rows(fakes, 0, b * n);
    const Var cd = losses::chamfer(rec, x, n, n);
    const Var feat = losses::feature_recon(nn::slice_rows(out.feature, 0, b), nn::slice_rows(out.feature, f0, b));
    const Var kl = losses::kl_gaussian(mu, logvar);
    const auto gan = losses::gan_losses_vaegan(nn::slice_rows(out.logit, 0, b), nn::slice_rows(out.logit, f0, b),
                                               nn::slice_rows(out.logit, f0 + b, b));
    t.chamfer = cd.item();
    t.feature = feat.item();
    t.kl = kl.item();
    t.gen_gan = gan.generator.item();
    terms = {{cfg_.weights.w_cd, cd}, {cfg_.weights.w_feat, feat}, {cfg_.weights.w_kl, kl},
             {cfg_.weights.w_gan, gan.generator}};
  } else {
    const Var gen_gan = nn::scale(nn::mean(nn::log_sigmoid(nn::slice_rows(out.logit, 0, b))), -1.0);
    t.gen_gan = gen_gan.item();
    terms = {{cfg_.weights.w_gan, gen_gan}};
  }
  if (use_con) {
    const Var con = losses::contrastive(nn::slice_rows(out.embed, f0, nf), nn::slice_rows(out.embed, f0 + nf, nf),
                                        cfg_.temperature);
    t.contrastive = con.item();
    terms.emplace_back(cfg_.weights.w_con, con);
  }
  require_finite("chamfer", t.chamfer, epoch_, batch_index);
  require_finite("feature", t.feature, epoch_, batch_index);
  require_finite("kl", t.kl, epoch_, batch_index);
  require_finite("gen_gan", t.gen_gan, epoch_, batch_index);
  require_finite("contrastive", t.contrastive, epoch_, batch_index);
  gt.backward(losses::weighted_sum(gt, terms));
  if (!gs.grads_finite()) throw NumericError("non-finite generator gradient at epoch " + std::to_string(epoch_ + 1));
  adam_step(gs, cfg_.optimizer);
  return t;
}

losses::LossReport Trainer::train_epoch(const Dataset& data) {
  const auto n = static_cast<std::size_t>(cfg_.generator.points);
  if (data.size() < 2) throw DataError("training needs at least 2 clouds");
  data.validate(n);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng_() % (i + 1));
    std::swap(order[i], order[j]);
  }
  LossTerms sum;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + 1 < order.size(); start += cfg_.batch_size) {
    const std::size_t count = std::min(cfg_.batch_size, order.size() - start);
    if (count < 2) break;
    Points real(static_cast<Eigen::Index>(count * n), 3);
    for (std::size_t k = 0; k < count; ++k) {
      real.middleRows(static_cast<Eigen::Index>(k * n), static_cast<Eigen::Index>(n)) =
          data.clouds[order[start + k]].points();
    }
    const LossTerms t = train_batch(real, count, batches);
    sum.chamfer += t.chamfer;
    sum.feature += t.feature;
    sum.kl += t.kl;
    sum.gen_gan += t.gen_gan;
    sum.contrastive += t.contrastive;
    sum.critic_gan += t.critic_gan;
    sum.critic_contrastive += t.critic_contrastive;
    ++batches;
  }
  const double inv = 1.0 / static_cast<double>(batches);
  for (double* v : {&sum.chamfer, &sum.feature, &sum.kl, &sum.gen_gan, &sum.contrastive, &sum.critic_gan,
                    &sum.critic_contrastive}) {
    *v *= inv;
  }
  ++epoch_;
  return losses::total_objective(sum, cfg_.weights, cfg_.mode == TrainMode::vae_gan);
}

void Trainer::adopt_schedule(const TrainConfig& cfg) {
  auto model_part = [](const TrainConfig& c) {
    nlohmann::json j = config_to_json(c);
    for (const char* key : {"epochs", "snapshot_epochs", "checkpoint_every"}) j.erase(key);
    return j;
  };
  const nlohmann::json mine = model_part(cfg_), theirs = model_part(cfg);
  if (mine != theirs) {
    for (const auto& [key, value] : mine.items()) {
      if (!theirs.contains(key) || theirs.at(key) != value) {
        throw ConfigError("config key '" + key + "' differs from the checkpoint being resumed");
      }
    }
    throw ConfigError("config differs from the checkpoint being resumed");
  }
  cfg_.epochs = cfg.epochs;
  cfg_.snapshot_epochs = cfg.snapshot_epochs;
  cfg_.checkpoint_every = cfg.checkpoint_every;
}

Snapshot decode_snapshot(const Networks& nets, const model::LatentCode& code) {
  auto& store = const_cast<nn::ParameterStore&>(nets.gen_store);
  return {nets.generator.decode(code, store), nets.generator.patch_ids()};
}

Snapshot Trainer::probe_snapshot() const { return decode_snapshot(nets_, probe_); }

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.pgck", epoch);
  return buf;
}

std::string snapshot_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.pcpf", epoch);
  return buf;
}

std::filesystem::path write_snapshot(const std::filesystem::path& run_dir, int epoch, const Snapshot& snap) {
  const auto dir = run_dir / "snapshots";
  std::filesystem::create_directories(dir);
  const auto cloud_path = dir / snapshot_name(epoch);
  io::write_cloud(cloud_path, snap.cloud, io::CloudFormat::binary);
  auto ids_path = cloud_path;
  ids_path.replace_extension(".pid");
  io::write_patch_ids(ids_path, snap.patch_ids);
  return cloud_path;
}

Dataset load_dataset(const TrainConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.generator.points);
  Dataset data;
  if (cfg.data.source == "synthetic") {
    data.category = "synthetic";
    for (std::size_t i = 0; i < cfg.data.count; ++i) {
      const auto& shape = cfg.data.shapes[i % cfg.data.shapes.size()];
      data.clouds.push_back(make_synthetic(shape, n, cfg.data.seed * 1000003ULL + i));
    }
  } else {
    data.category = cfg.data.path.filename().string();
    std::vector<std::filesystem::path> files;
    for (const char* ext : {".pcpf", ".bin", ".xyz", ".txt"}) {
      const auto found = io::list_files(cfg.data.path, ext);
      files.insert(files.end(), found.begin(), found.end());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no cloud files in " + cfg.data.path.string());
    for (const auto& f : files) {
      PointCloud c = io::read_cloud(f);
      if (c.size() != n) {
        throw DataError(f.string() + " has " + std::to_string(c.size()) + " points, expected " + std::to_string(n));
      }
      data.clouds.push_back(normalize(c));
    }
  }
  data.validate(n);
  return data;
}

void run_training(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                  const std::optional<std::filesystem::path>& resume) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "snapshots");
  Trainer trainer = resume ? Trainer::load_checkpoint(*resume) : Trainer(cfg);
  if (resume) trainer.adopt_schedule(cfg);
  {
    std::ofstream out(run_dir / "config.json");
    out << config_to_json(cfg).dump(2) << '\n';
  }
  {
    const Eigen::VectorXf z = trainer.probe_code().z.cast<float>();
    io::write_embedding(run_dir / "probe_z.pgem", std::span<const float>(z.data(), static_cast<std::size_t>(z.size())));
  }

  const auto csv_path = run_dir / "losses.csv";
  std::vector<std::string> kept;
  if (resume && fs::exists(csv_path)) {
    std::ifstream in(csv_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoi(line.substr(0, line.find(','))) <= trainer.epoch()) kept.push_back(line);
    }
  }
  bool header_written = false;
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!kept.empty()) {
      const auto cols = losses::total_objective({}, trainer.config().weights,
                                                trainer.config().mode == TrainMode::vae_gan).columns();
      out << "epoch";
      for (const auto& [name, v] : cols) out << ',' << name;
      out << '\n';
      for (const auto& l : kept) out << l << '\n';
      header_written = true;
    }
  }

  while (trainer.epoch() < cfg.epochs) {
    const losses::LossReport report = trainer.train_epoch(data);
    const int e = trainer.epoch();
    std::ofstream out(csv_path, std::ios::app);
    if (!header_written) {
      out << "epoch";
      for (const auto& [name, v] : report.columns()) out << ',' << name;
      out << '\n';
      header_written = true;
    }
    std::ostringstream row;
    row.precision(17);
    row << e;
    for (const auto& [name, v] : report.columns()) row << ',' << v;
    out << row.str() << '\n';
    out.close();
    if (std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(), e) != cfg.snapshot_epochs.end()) {
      write_snapshot(run_dir, e, trainer.probe_snapshot());
    }
    if ((cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0) || e == cfg.epochs) {
      trainer.save_checkpoint(run_dir / "checkpoints" / checkpoint_name(e));
    }
  }
}

}  // namespace patchgen::train
