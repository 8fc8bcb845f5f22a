#pragma once

#include "patchgen/nn/tape.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace patchgen::nn {

/// One named learnable array. `value`, `m` and `v` are the persisted f32
/// state; `grad` is the transient accumulation buffer.
struct ParameterEntry {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<float> value;
  std::vector<double> grad;
  std::vector<float> m;
  std::vector<float> v;

  std::size_t size() const { return value.size(); }
  Matrix as_matrix() const;
  void assign(const Matrix& m);
};

/// Ordered collection of named parameters plus the optimizer step counter.
class ParameterStore {
 public:
  ParameterStore() = default;

  /// Throws ShapeError on a duplicate name.
  ParameterEntry& create(std::string name, Eigen::Index rows, Eigen::Index cols);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  ParameterEntry& at(std::string_view name);
  const ParameterEntry& at(std::string_view name) const;
  ParameterEntry& entry(std::size_t i) { return entries_[i]; }
  const ParameterEntry& entry(std::size_t i) const { return entries_[i]; }

  std::span<ParameterEntry> entries() { return entries_; }
  std::span<const ParameterEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad();
  bool grads_finite() const;

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

 private:
  std::vector<ParameterEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t step_ = 0;
};

/// Exact number of scalars in entries whose name starts with `prefix`.
std::size_t count_params(const ParameterStore& store, std::string_view prefix = "");

/// U(-b, b) with b = sqrt(6 / fan_in) (He/Kaiming for ReLU networks).
void init_kaiming_uniform(ParameterEntry& e, Eigen::Index fan_in, std::mt19937_64& rng);
/// U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
void init_xavier_uniform(ParameterEntry& e, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);
void init_uniform(ParameterEntry& e, double lo, double hi, std::mt19937_64& rng);
void init_constant(ParameterEntry& e, double value);

}  // namespace patchgen::nn
