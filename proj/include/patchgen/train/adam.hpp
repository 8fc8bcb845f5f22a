#pragma once

#include "patchgen/nn/parameter_store.hpp"

namespace patchgen::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// One bias-corrected Adam update of every entry from its gradient buffer.
/// Increments the store's step counter; moments live in the store.
void adam_step(nn::ParameterStore& store, const AdamConfig& cfg);

}  // namespace patchgen::train
