#include "patchgen/nn/tape.hpp"

#include "patchgen/nn/parameter_store.hpp"

namespace patchgen::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return Matrix::Zero(rows(), cols());
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr, 0});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, nullptr, 0});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  const std::size_t entry = store.index_of(name);
  const auto key = std::make_pair(static_cast<const ParameterStore*>(&store), entry);
  if (auto it = parameter_nodes_.find(key); it != parameter_nodes_.end()) return {this, it->second};
  if (frozen_.contains(&store)) {
    nodes_.push_back(Node{store.entry(entry).as_matrix(), {}, false, {}, nullptr, 0});
  } else {
    nodes_.push_back(Node{store.entry(entry).as_matrix(), {}, true, {}, &store, entry});
  }
  parameter_nodes_.emplace(key, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ShapeError("operands belong to different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}, nullptr, 0});
  return {this, nodes_.size() - 1};
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward(loss) requires a 1x1 node");
  backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& output, const Matrix& seed) {
  if (output.tape() != this) throw ShapeError("output belongs to a different tape");
  if (seed.rows() != output.rows() || seed.cols() != output.cols()) throw ShapeError("seed shape mismatch");
  accumulate(output.id(), seed);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.store != nullptr) {
      auto& e = n.store->entry(n.entry);
      const double* g = n.grad.data();
      for (std::size_t j = 0; j < e.grad.size(); ++j) e.grad[j] += g[j];
    }
  }
}

}  // namespace patchgen::nn
