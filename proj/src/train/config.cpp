#include "patchgen/train/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace patchgen::train {

using nlohmann::json;

TrainMode parse_mode(std::string_view name) {
  if (name == "vae_gan") return TrainMode::vae_gan;
  if (name == "gan_only") return TrainMode::gan_only;
  throw ConfigError("unknown training mode '" + std::string(name) + "' (expected vae_gan or gan_only)");
}

std::string_view mode_name(TrainMode mode) { return mode == TrainMode::vae_gan ? "vae_gan" : "gan_only"; }

void TrainConfig::validate() const {
  generator.validate();
  optimizer.validate();
  weights.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (encoder.latent_dim != generator.latent_dim) throw ConfigError("encoder and generator latent dims differ");
  if (encoder.widths.empty() || discriminator.widths.empty()) throw ConfigError("network widths must be nonempty");
  for (auto w : encoder.widths) {
    if (w < 1) throw ConfigError("encoder widths must be positive");
  }
  for (auto w : discriminator.widths) {
    if (w < 1) throw ConfigError("discriminator widths must be positive");
  }
  if (discriminator.head_hidden < 1 || discriminator.contrast_dim < 1) {
    throw ConfigError("discriminator head sizes must be positive");
  }
  if (augmentation.jitter_sigma < 0.0 || augmentation.jitter_clip < 0.0) {
    throw ConfigError("augmentation jitter must be non-negative");
  }
  for (int e : snapshot_epochs) {
    if (e < 1) throw ConfigError("snapshot epochs start at 1");
  }
  if (data.source != "synthetic" && data.source != "dir") {
    throw ConfigError("data.source must be 'synthetic' or 'dir'");
  }
  if (data.source == "synthetic") {
    if (data.shapes.empty() || data.count == 0) throw ConfigError("synthetic data needs shapes and a count");
    for (const auto& s : data.shapes) parse_shape(s);
  }
}

namespace {

// Reads an object while tracking which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config key '" + display() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + full(key) + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  Reader child(const char* key) { return Reader(j_.at(key), full(key)); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + full(k.c_str()) + "'");
    }
  }

 private:
  std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  Reader root(j, "");
  if (root.has("generator")) {
    Reader g = root.child("generator");
    std::string kind(model::generator_kind_name(c.generator.kind));
    g.get("kind", kind);
    c.generator.kind = model::parse_generator_kind(kind);
    g.get("patches", c.generator.patches);
    g.get("points", c.generator.points);
    g.get("latent_dim", c.generator.latent_dim);
    g.get("mlp_widths", c.generator.mlp_widths);
    g.get("point_trans_widths", c.generator.point_trans_widths);
    g.get("point_trans_depth", c.generator.point_trans_depth);
    g.get("point_heads", c.generator.point_heads);
    g.get("dual_model_dim", c.generator.dual_model_dim);
    g.get("dual_pairs", c.generator.dual_pairs);
    g.get("dual_point_heads", c.generator.dual_point_heads);
    g.get("patch_heads", c.generator.patch_heads);
    g.get("ffn_multiplier", c.generator.ffn_multiplier);
    g.finish();
  }
  c.encoder.latent_dim = c.generator.latent_dim;
  if (root.has("encoder")) {
    Reader e = root.child("encoder");
    e.get("widths", c.encoder.widths);
    e.finish();
  }
  if (root.has("discriminator")) {
    Reader d = root.child("discriminator");
    d.get("widths", c.discriminator.widths);
    d.get("head_hidden", c.discriminator.head_hidden);
    d.get("contrast_dim", c.discriminator.contrast_dim);
    d.finish();
  }
  if (root.has("optimizer")) {
    Reader o = root.child("optimizer");
    o.get("lr", c.optimizer.lr);
    o.get("beta1", c.optimizer.beta1);
    o.get("beta2", c.optimizer.beta2);
    o.get("eps", c.optimizer.eps);
    o.finish();
  }
  if (root.has("loss_weights")) {
    Reader w = root.child("loss_weights");
    w.get("w_cd", c.weights.w_cd);
    w.get("w_feat", c.weights.w_feat);
    w.get("w_kl", c.weights.w_kl);
    w.get("w_gan", c.weights.w_gan);
    w.get("w_con", c.weights.w_con);
    w.finish();
  }
  if (root.has("augmentation")) {
    Reader a = root.child("augmentation");
    std::string axis = "y";
    a.get("axis", axis);
    c.augmentation.axis = parse_axis(axis);
    a.get("jitter_sigma", c.augmentation.jitter_sigma);
    a.get("jitter_clip", c.augmentation.jitter_clip);
    a.get("max_angle", c.augmentation.max_angle);
    a.finish();
  }
  if (root.has("data")) {
    Reader d = root.child("data");
    d.get("source", c.data.source);
    std::string path;
    d.get("path", path);
    c.data.path = path;
    d.get("shapes", c.data.shapes);
    d.get("count", c.data.count);
    d.get("seed", c.data.seed);
    d.finish();
  }
  std::string mode(mode_name(c.mode));
  root.get("mode", mode);
  c.mode = parse_mode(mode);
  root.get("batch_size", c.batch_size);
  root.get("epochs", c.epochs);
  root.get("seed", c.seed);
  root.get("temperature", c.temperature);
  root.get("snapshot_epochs", c.snapshot_epochs);
  root.get("checkpoint_every", c.checkpoint_every);
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  const char* axis_names[] = {"x", "y", "z"};
  json j;
  j["generator"] = {{"kind", model::generator_kind_name(c.generator.kind)},
                    {"patches", c.generator.patches},
                    {"points", c.generator.points},
                    {"latent_dim", c.generator.latent_dim},
                    {"mlp_widths", c.generator.mlp_widths},
                    {"point_trans_widths", c.generator.point_trans_widths},
                    {"point_trans_depth", c.generator.point_trans_depth},
                    {"point_heads", c.generator.point_heads},
                    {"dual_model_dim", c.generator.dual_model_dim},
                    {"dual_pairs", c.generator.dual_pairs},
                    {"dual_point_heads", c.generator.dual_point_heads},
                    {"patch_heads", c.generator.patch_heads},
                    {"ffn_multiplier", c.generator.ffn_multiplier}};
  j["encoder"] = {{"widths", c.encoder.widths}};
  j["discriminator"] = {{"widths", c.discriminator.widths},
                        {"head_hidden", c.discriminator.head_hidden},
                        {"contrast_dim", c.discriminator.contrast_dim}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  j["loss_weights"] = {{"w_cd", c.weights.w_cd},
                       {"w_feat", c.weights.w_feat},
                       {"w_kl", c.weights.w_kl},
                       {"w_gan", c.weights.w_gan},
                       {"w_con", c.weights.w_con}};
  j["augmentation"] = {{"axis", axis_names[static_cast<int>(c.augmentation.axis)]},
                       {"jitter_sigma", c.augmentation.jitter_sigma},
                       {"jitter_clip", c.augmentation.jitter_clip},
                       {"max_angle", c.augmentation.max_angle}};
  j["data"] = {{"source", c.data.source},
               {"path", c.data.path.string()},
               {"shapes", c.data.shapes},
               {"count", c.data.count},
               {"seed", c.data.seed}};
  j["mode"] = mode_name(c.mode);
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["temperature"] = c.temperature;
  j["snapshot_epochs"] = c.snapshot_epochs;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace patchgen::train
