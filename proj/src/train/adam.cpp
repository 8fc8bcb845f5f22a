#include "patchgen/train/adam.hpp"

#include <cmath>

namespace patchgen::train {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

void adam_step(nn::ParameterStore& store, const AdamConfig& cfg) {
  const std::uint64_t t = store.step() + 1;
  store.set_step(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double g = e.grad[i];
      const double m = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      e.m[i] = static_cast<float>(m);
      e.v[i] = static_cast<float>(v);
      e.value[i] = static_cast<float>(e.value[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  }
}

}  // namespace patchgen::train
