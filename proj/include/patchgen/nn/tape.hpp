#pragma once

#include "patchgen/core/point_cloud.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace patchgen::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;
class ParameterStore;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  /// Gradient after Tape::backward; a zero matrix when nothing flowed here.
  Matrix grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every consumer before its inputs.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf bound to a store entry. Repeated calls for one entry return the same
  /// node; backward() adds the leaf gradient into the entry's gradient buffer.
  Var parameter(ParameterStore& store, const std::string& name);
  /// Later parameter() calls on `store` yield constants (no gradient is tracked).
  void freeze(const ParameterStore& store) { frozen_.insert(&store); }

  /// Appends a computed node. `backward` runs only if some input requires grad.
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and sweeps the tape.
  void backward(const Var& loss);
  void backward(const Var& output, const Matrix& seed);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() > 0; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    // g never refers to n.grad: backward closures read their own node only.
    if (n.grad.size() == 0) {
      n.grad.noalias() = g;
    } else {
      n.grad.noalias() += g;
    }
  }
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    accumulate(v.id(), g);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    ParameterStore* store = nullptr;
    std::size_t entry = 0;
  };

  std::vector<Node> nodes_;
  std::map<std::pair<const ParameterStore*, std::size_t>, std::size_t> parameter_nodes_;
  std::set<const ParameterStore*> frozen_;
};

}  // namespace patchgen::nn
