#include "patchgen/model/generators.hpp"

#include <numeric>
#include <string>

namespace patchgen::model {

GeneratorKind parse_generator_kind(std::string_view name) {
  if (name == "mlp") return GeneratorKind::mlp;
  if (name == "point_trans") return GeneratorKind::point_trans;
  if (name == "dual_trans") return GeneratorKind::dual_trans;
  throw ConfigError("unknown generator kind '" + std::string(name) + "' (expected mlp, point_trans or dual_trans)");
}

std::string_view generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::mlp: return "mlp";
    case GeneratorKind::point_trans: return "point_trans";
    case GeneratorKind::dual_trans: return "dual_trans";
  }
  return "unknown";
}

void GeneratorConfig::validate() const {
  if (patches < 1) throw ConfigError("patch count must be at least 1");
  if (points < patches) throw ConfigError("need at least one point per patch");
  if (patches > 65535) throw ConfigError("patch ids are stored as u16");
  if (latent_dim < 1) throw ConfigError("latent dimension must be at least 1");
  if (ffn_multiplier < 1) throw ConfigError("ffn multiplier must be at least 1");
  switch (kind) {
    case GeneratorKind::mlp:
      for (auto w : mlp_widths) {
        if (w < 1) throw ConfigError("MLP-G widths must be positive");
      }
      break;
    case GeneratorKind::point_trans:
      if (point_trans_widths.empty() || point_trans_depth < 0) throw ConfigError("PointTrans-G needs stage widths");
      for (auto w : point_trans_widths) {
        if (w < 1 || w % point_heads != 0) {
          throw ConfigError("PointTrans-G width " + std::to_string(w) + " must be divisible by " +
                            std::to_string(point_heads) + " heads");
        }
      }
      break;
    case GeneratorKind::dual_trans:
      if (points % patches != 0) throw ConfigError("dual_trans requires equal patches");
      if (dual_pairs < 1) throw ConfigError("DualTrans-G needs at least one layer pair");
      nn::AttentionConfig{dual_point_heads, dual_model_dim, 0, 0, ffn_multiplier}.validate();
      nn::AttentionConfig{patch_heads, dual_model_dim, 0, 0, ffn_multiplier}.validate();
      break;
  }
}

std::vector<Eigen::Index> GeneratorConfig::patch_sizes() const {
  std::vector<Eigen::Index> sizes(static_cast<std::size_t>(patches), points / patches);
  for (Eigen::Index i = 0; i < points % patches; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

Var expand_input(const Var& z, const Var& prior) {
  if (prior.cols() != 2) throw ShapeError("patch priors must have 2 columns");
  if (z.tape() != prior.tape()) throw ShapeError("operands belong to different tapes");
  const Eigen::Index clouds = z.rows(), d = z.cols(), t = prior.rows();
  Matrix out(clouds * t, d + 2);
  for (Eigen::Index b = 0; b < clouds; ++b) {
    out.block(b * t, 0, t, d) = z.value().row(b).replicate(t, 1);
    out.block(b * t, d, t, 2) = prior.value();
  }
  const auto iz = z.id(), ip = prior.id();
  return z.tape()->record(std::move(out), {z, prior}, [iz, ip, clouds, d, t](Tape& tape, std::size_t self) {
    const Matrix& g = tape.grad(self);
    if (tape.requires_grad(iz)) {
      Matrix dz(clouds, d);
      for (Eigen::Index b = 0; b < clouds; ++b) dz.row(b) = g.block(b * t, 0, t, d).colwise().sum();
      tape.accumulate(iz, dz);
    }
    if (tape.requires_grad(ip)) {
      Matrix dp = Matrix::Zero(t, 2);
      for (Eigen::Index b = 0; b < clouds; ++b) dp += g.block(b * t, d, t, 2);
      tape.accumulate(ip, dp);
    }
  });
}

Generator::Generator(GeneratorConfig cfg, std::string prefix) : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
  cfg_.validate();
  sizes_ = cfg_.patch_sizes();
  const Eigen::Index in = cfg_.input_width();
  switch (cfg_.kind) {
    case GeneratorKind::mlp: {
      std::vector<Eigen::Index> widths{in};
      widths.insert(widths.end(), cfg_.mlp_widths.begin(), cfg_.mlp_widths.end());
      widths.push_back(3);
      for (Eigen::Index i = 0; i < cfg_.patches; ++i) {
        mlp_modules_.emplace_back(prefix_ + ".patch" + std::to_string(i) + ".mlp", widths, false);
      }
      break;
    }
    case GeneratorKind::point_trans: {
      for (Eigen::Index i = 0; i < cfg_.patches; ++i) {
        const std::string base = prefix_ + ".patch" + std::to_string(i);
        std::vector<PointTransStage> stages;
        Eigen::Index width = in;
        for (std::size_t s = 0; s < cfg_.point_trans_widths.size(); ++s) {
          const Eigen::Index w = cfg_.point_trans_widths[s];
          PointTransStage stage{nn::Dense(base + ".dense" + std::to_string(s), width, w), {}};
          for (Eigen::Index l = 0; l < cfg_.point_trans_depth; ++l) {
            stage.layers.emplace_back(base + ".stage" + std::to_string(s) + ".tf" + std::to_string(l), w, w,
                                      nn::AttentionConfig{cfg_.point_heads, w, 0, 0, cfg_.ffn_multiplier});
          }
          stages.push_back(std::move(stage));
          width = w;
        }
        point_trans_modules_.push_back(std::move(stages));
        point_trans_heads_.emplace_back(base + ".head", width, 3);
      }
      break;
    }
    case GeneratorKind::dual_trans: {
      const Eigen::Index d = cfg_.dual_model_dim;
      for (Eigen::Index p = 0; p < cfg_.dual_pairs; ++p) {
        dual_layers_.emplace_back(prefix_ + ".dual" + std::to_string(2 * p) + ".point", p == 0 ? in : d, d,
                                  nn::AttentionConfig{cfg_.dual_point_heads, d, 0, 0, cfg_.ffn_multiplier},
                                  nn::TokenMixing::pointwise);
        dual_layers_.emplace_back(prefix_ + ".dual" + std::to_string(2 * p + 1) + ".patch", d,
                                  p + 1 == cfg_.dual_pairs ? 3 : d,
                                  nn::AttentionConfig{cfg_.patch_heads, d, 0, 0, cfg_.ffn_multiplier},
                                  nn::TokenMixing::patchwise);
      }
      break;
    }
  }
}

std::string Generator::prior_name(Eigen::Index patch) const {
  return prefix_ + ".prior" + std::to_string(patch);
}

void Generator::init(ParameterStore& store, std::mt19937_64& rng) const {
  for (Eigen::Index i = 0; i < cfg_.patches; ++i) {
    nn::init_uniform(store.create(prior_name(i), sizes_[static_cast<std::size_t>(i)], 2), 0.0, 1.0, rng);
  }
  for (const auto& m : mlp_modules_) m.init(store, rng);
  for (std::size_t i = 0; i < point_trans_modules_.size(); ++i) {
    for (const auto& stage : point_trans_modules_[i]) {
      stage.dense.init(store, rng);
      for (const auto& l : stage.layers) l.init(store, rng);
    }
    point_trans_heads_[i].init(store, rng);
  }
  for (const auto& l : dual_layers_) l.init(store, rng);
}

Var Generator::run_patch_module(Tape& tape, ParameterStore& store, Eigen::Index patch, Var x,
                                Eigen::Index points) const {
  const auto i = static_cast<std::size_t>(patch);
  if (cfg_.kind == GeneratorKind::mlp) return mlp_modules_[i].forward(tape, store, x);
  for (const auto& stage : point_trans_modules_[i]) {
    x = nn::relu(stage.dense.forward(tape, store, x));
    for (const auto& layer : stage.layers) x = layer.forward(tape, store, x, points);
  }
  return point_trans_heads_[i].forward(tape, store, x);
}

Var Generator::forward_per_patch(Tape& tape, ParameterStore& store, const Var& z) const {
  const Eigen::Index clouds = z.rows();
  std::vector<Var> outputs;
  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (Eigen::Index i = 0; i < cfg_.patches; ++i) {
    const Eigen::Index t = sizes_[static_cast<std::size_t>(i)];
    const Var x = expand_input(z, tape.parameter(store, prior_name(i)));
    outputs.push_back(run_patch_module(tape, store, i, x, t));
    offsets.push_back(offset);
    offset += clouds * t;
  }
  // Patch outputs are (cloud, point) ordered; reorder to (cloud, patch, point).
  std::vector<Eigen::Index> index;
  index.reserve(static_cast<std::size_t>(clouds * cfg_.points));
  for (Eigen::Index b = 0; b < clouds; ++b) {
    for (Eigen::Index i = 0; i < cfg_.patches; ++i) {
      const Eigen::Index t = sizes_[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < t; ++j) index.push_back(offsets[static_cast<std::size_t>(i)] + b * t + j);
    }
  }
  return nn::gather_rows(nn::concat_rows(outputs), std::move(index));
}

Var Generator::forward_dual(Tape& tape, ParameterStore& store, const Var& z, nn::PatchAttentionProbe* probe) const {
  std::vector<Var> priors;
  for (Eigen::Index i = 0; i < cfg_.patches; ++i) priors.push_back(tape.parameter(store, prior_name(i)));
  const Eigen::Index t = sizes_.front();
  Var x = expand_input(z, nn::concat_rows(priors));
  bool probed = false;
  for (const auto& layer : dual_layers_) {
    nn::PatchAttentionProbe* p = nullptr;
    if (layer.mixing() == nn::TokenMixing::patchwise && !probed) {
      p = probe;
      probed = true;
    }
    x = layer.forward(tape, store, x, t, cfg_.patches, p);
  }
  return x;
}

Var Generator::forward(Tape& tape, ParameterStore& store, const Var& z, nn::PatchAttentionProbe* probe) const {
  if (z.cols() != cfg_.latent_dim) {
    throw ShapeError("generator expects latent width " + std::to_string(cfg_.latent_dim) + ", got " +
                     std::to_string(z.cols()));
  }
  if (cfg_.kind == GeneratorKind::dual_trans) return forward_dual(tape, store, z, probe);
  return forward_per_patch(tape, store, z);
}

PointCloud Generator::decode(const LatentCode& code, ParameterStore& store) const {
  Tape tape;
  const Var z = tape.constant(code.z.transpose());
  return PointCloud(Points(forward(tape, store, z).value()));
}

std::vector<std::uint16_t> Generator::patch_ids() const {
  std::vector<std::uint16_t> ids;
  ids.reserve(static_cast<std::size_t>(cfg_.points));
  for (std::size_t i = 0; i < sizes_.size(); ++i) ids.insert(ids.end(), static_cast<std::size_t>(sizes_[i]),
                                                             static_cast<std::uint16_t>(i));
  return ids;
}

GeneratorParamCounts Generator::param_counts() const {
  GeneratorParamCounts c;
  c.priors = static_cast<std::size_t>(cfg_.points) * 2;
  for (const auto& m : mlp_modules_) c.per_patch_total += m.param_count();
  for (std::size_t i = 0; i < point_trans_modules_.size(); ++i) {
    std::size_t n = point_trans_heads_[i].param_count();
    for (const auto& stage : point_trans_modules_[i]) {
      n += stage.dense.param_count();
      for (const auto& l : stage.layers) n += l.param_count();
    }
    c.per_patch_total += n;
  }
  if (cfg_.patches > 0 && c.per_patch_total > 0) c.per_patch_each = c.per_patch_total / static_cast<std::size_t>(cfg_.patches);
  for (const auto& l : dual_layers_) c.shared += l.param_count();
  return c;
}

}  // namespace patchgen::model
