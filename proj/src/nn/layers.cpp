#include "patchgen/nn/layers.hpp"

namespace patchgen::nn {

// One tape node for x*W + b keeps a single activation buffer per layer.
Var dense(const Var& x, const Var& w, const Var& b) {
  if (x.tape() != w.tape() || x.tape() != b.tape()) throw ShapeError("dense: operands on different tapes");
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ShapeError("dense: " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + " * " +
                     std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + " + " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, w, b}, [ix, iw, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Dense::Dense(std::string name, Eigen::Index in, Eigen::Index out) : name_(std::move(name)), in_(in), out_(out) {
  if (in < 1 || out < 1) throw ConfigError("dense layer '" + name_ + "' needs positive widths");
}

void Dense::init(ParameterStore& store, std::mt19937_64& rng) const {
  init_kaiming_uniform(store.create(name_ + ".w", in_, out_), in_, rng);
  store.create(name_ + ".b", 1, out_);
}

Var Dense::forward(Tape& tape, ParameterStore& store, const Var& x) const {
  if (x.cols() != in_) {
    throw ShapeError("dense '" + name_ + "': expected " + std::to_string(in_) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  return dense(x, tape.parameter(store, name_ + ".w"), tape.parameter(store, name_ + ".b"));
}

Mlp::Mlp(const std::string& name, const std::vector<Eigen::Index>& widths, bool relu_last) : relu_last_(relu_last) {
  if (widths.size() < 2) throw ConfigError("MLP '" + name + "' needs at least an input and an output width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1]);
  }
}

void Mlp::init(ParameterStore& store, std::mt19937_64& rng) const {
  for (const auto& l : layers_) l.init(store, rng);
}

Var Mlp::forward(Tape& tape, ParameterStore& store, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(tape, store, x);
    if (relu_last_ || i + 1 < layers_.size()) x = relu(x);
  }
  return x;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

void AttentionConfig::validate() const {
  if (heads < 1 || d_model < 1 || ffn_multiplier < 1 || d_k < 0 || d_v < 0) {
    throw ConfigError("attention dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (key_width() % heads != 0 || value_width() % heads != 0) {
    throw ConfigError("key/value widths must be divisible by the head count");
  }
}

Matrix PatchAttentionProbe::weights(Eigen::Index cloud, Eigen::Index head) const {
  return patch_attention_weights(queries, keys, patches, heads, cloud, head);
}

TransformerLayer::TransformerLayer(std::string name, Eigen::Index d_in, Eigen::Index d_out, AttentionConfig cfg,
                                   TokenMixing mixing)
    : name_(std::move(name)), d_in_(d_in), d_out_(d_out), cfg_(cfg), mixing_(mixing) {
  cfg_.validate();
  if (d_in < 1 || d_out < 1) throw ConfigError("transformer layer '" + name_ + "' needs positive widths");
}

void TransformerLayer::init(ParameterStore& store, std::mt19937_64& rng) const {
  const Eigen::Index d = cfg_.d_model, dk = cfg_.key_width(), dv = cfg_.value_width();
  const Eigen::Index hidden = cfg_.ffn_multiplier * d;
  auto linear = [&](const std::string& n, Eigen::Index in, Eigen::Index out, bool xavier) {
    auto& w = store.create(name_ + "." + n + ".w", in, out);
    if (xavier) {
      init_xavier_uniform(w, in, out, rng);
    } else {
      init_kaiming_uniform(w, in, rng);
    }
    store.create(name_ + "." + n + ".b", 1, out);
  };
  auto norm = [&](const std::string& n) {
    init_constant(store.create(name_ + "." + n + ".g", 1, d), 1.0);
    store.create(name_ + "." + n + ".b", 1, d);
  };
  if (d_in_ != d) linear("in", d_in_, d, true);
  norm("ln1");
  linear("q", d, dk, true);
  linear("k", d, dk, true);
  linear("v", d, dv, true);
  linear("o", dv, d, true);
  norm("ln2");
  linear("ffn1", d, hidden, false);
  linear("ffn2", hidden, d, false);
  if (d_out_ != d) linear("out", d, d_out_, true);
}

Var TransformerLayer::forward(Tape& tape, ParameterStore& store, const Var& x, Eigen::Index points,
                              Eigen::Index patches, PatchAttentionProbe* probe) const {
  if (x.cols() != d_in_) {
    throw ShapeError("transformer '" + name_ + "': expected " + std::to_string(d_in_) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  if (points < 1 || patches < 1 || x.rows() % (points * patches) != 0) {
    throw ShapeError("transformer '" + name_ + "': rows not divisible by patches*points");
  }
  auto p = [&](const std::string& n) { return tape.parameter(store, name_ + "." + n); };
  auto linear = [&](const std::string& n, const Var& in) { return dense(in, p(n + ".w"), p(n + ".b")); };

  Var h = d_in_ != cfg_.d_model ? linear("in", x) : x;

  const Var a = layer_norm(h, p("ln1.g"), p("ln1.b"));
  Var mixed;
  if (mixing_ == TokenMixing::pointwise) {
    mixed = grouped_attention(linear("q", a), linear("k", a), linear("v", a), points, cfg_.heads);
  } else {
    const Var desc = segment_mean(a, points);
    const Var q = linear("q", desc);
    const Var k = linear("k", desc);
    if (probe != nullptr) {
      probe->queries = q.value();
      probe->keys = k.value();
      probe->patches = patches;
      probe->heads = cfg_.heads;
    }
    mixed = patch_attention(q, k, linear("v", a), patches, points, cfg_.heads);
  }
  h = add(h, linear("o", mixed));

  const Var f = layer_norm(h, p("ln2.g"), p("ln2.b"));
  h = add(h, linear("ffn2", relu(linear("ffn1", f))));

  return d_out_ != cfg_.d_model ? linear("out", h) : h;
}

std::size_t TransformerLayer::param_count() const {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto dk = static_cast<std::size_t>(cfg_.key_width());
  const auto dv = static_cast<std::size_t>(cfg_.value_width());
  const auto hidden = static_cast<std::size_t>(cfg_.ffn_multiplier) * d;
  const auto in = static_cast<std::size_t>(d_in_), out = static_cast<std::size_t>(d_out_);
  std::size_t n = 0;
  if (in != d) n += (in + 1) * d;
  n += 2 * d;                        // ln1
  n += 2 * (d + 1) * dk;             // q, k
  n += (d + 1) * dv + (dv + 1) * d;  // v, o
  n += 2 * d;                        // ln2
  n += (d + 1) * hidden + (hidden + 1) * d;
  if (out != d) n += (d + 1) * out;
  return n;
}

Var transformer_layer(Tape& tape, ParameterStore& store, const TransformerLayer& layer, const Var& tokens) {
  return layer.forward(tape, store, tokens, tokens.rows(), 1);
}

}  // namespace patchgen::nn
