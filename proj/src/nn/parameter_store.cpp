#include "patchgen/nn/parameter_store.hpp"

#include <algorithm>
#include <cmath>

namespace patchgen::nn {

Matrix ParameterEntry::as_matrix() const {
  Matrix m(rows, cols);
  std::transform(value.begin(), value.end(), m.data(), [](float f) { return static_cast<double>(f); });
  return m;
}

void ParameterEntry::assign(const Matrix& mat) {
  if (mat.rows() != rows || mat.cols() != cols) throw ShapeError("assign: shape mismatch for '" + name + "'");
  std::transform(mat.data(), mat.data() + mat.size(), value.begin(), [](double d) { return static_cast<float>(d); });
}

ParameterEntry& ParameterStore::create(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw ShapeError("parameter '" + name + "' must have positive shape");
  if (index_.contains(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  const auto n = static_cast<std::size_t>(rows * cols);
  index_.emplace(name, entries_.size());
  entries_.push_back(ParameterEntry{std::move(name), rows, cols, std::vector<float>(n, 0.0f),
                                    std::vector<double>(n, 0.0), std::vector<float>(n, 0.0f),
                                    std::vector<float>(n, 0.0f)});
  return entries_.back();
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

ParameterEntry& ParameterStore::at(std::string_view name) { return entries_[index_of(name)]; }
const ParameterEntry& ParameterStore::at(std::string_view name) const { return entries_[index_of(name)]; }

void ParameterStore::zero_grad() {
  for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

bool ParameterStore::grads_finite() const {
  for (const auto& e : entries_) {
    for (double g : e.grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

std::size_t count_params(const ParameterStore& store, std::string_view prefix) {
  std::size_t total = 0;
  for (const auto& e : store.entries()) {
    if (std::string_view(e.name).starts_with(prefix)) total += e.size();
  }
  return total;
}

void init_uniform(ParameterEntry& e, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : e.value) v = static_cast<float>(dist(rng));
}

void init_kaiming_uniform(ParameterEntry& e, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  init_uniform(e, -bound, bound, rng);
}

void init_xavier_uniform(ParameterEntry& e, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  init_uniform(e, -bound, bound, rng);
}

void init_constant(ParameterEntry& e, double value) {
  std::fill(e.value.begin(), e.value.end(), static_cast<float>(value));
}

}  // namespace patchgen::nn
