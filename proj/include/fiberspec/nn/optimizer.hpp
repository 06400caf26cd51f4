#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fiberspec/nn/layers.hpp"

namespace fiberspec::nn {

/// Adam moments for one parameter list. Moments are kept in double
/// regardless of the parameter precision.
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update using each parameter's current gradient.
/// Moments are allocated on first use. A non-finite gradient aborts the step
/// before anything is modified.
template <class T>
void adam_step(OptimizerState& state, std::span<Param<T>* const> params);

}  // namespace fiberspec::nn
