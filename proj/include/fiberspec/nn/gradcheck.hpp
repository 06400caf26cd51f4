#pragma once

#include <cstdint>
#include <span>

#include "fiberspec/nn/loss.hpp"
#include "fiberspec/nn/network.hpp"

namespace fiberspec::nn {

struct GradCheckOptions {
  double step = 1e-3;
  /// Check at most this many parameters (random subsample); 0 checks all.
  std::size_t max_parameters = 0;
  std::uint64_t seed = 0;
  /// Reseeds the dropout stream to this value before every forward pass.
  std::uint64_t dropout_seed = 12345;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences on parameters versus backprop, train mode.
/// Relative error is |a - n| / max(1e-8, |a| + |n|).
/// `labels` is used for cross-entropy, `targets` for MSE.
GradCheckResult gradient_check(Network<double>& net, LossKind loss, const Tensor<double>& inputs,
                               std::span<const int> labels, const Tensor<double>& targets,
                               const GradCheckOptions& options = {});

}  // namespace fiberspec::nn
