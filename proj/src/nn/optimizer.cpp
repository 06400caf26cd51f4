#include "fiberspec/nn/optimizer.hpp"

#include <cmath>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

template <class T>
void adam_step(OptimizerState& state, std::span<Param<T>* const> params) {
  if (!(state.learning_rate >= 0.0)) fail(ErrorCode::ValidationError, "learning rate must be non-negative");
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->value.size(), 0.0);
      state.second_moment.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state tracks a different parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto* p = params[k];
    if (p->grad.shape() != p->value.shape() || state.first_moment[k].size() != p->value.size()) {
      fail(ErrorCode::ShapeMismatch, "gradient/moment shape differs from parameter " + p->name);
    }
    for (const T g : p->grad.values()) {
      if (!std::isfinite(g)) fail(ErrorCode::NonFinite, "non-finite gradient for " + p->name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      const double update = state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - update);
    }
  }
}

template void adam_step<float>(OptimizerState&, std::span<Param<float>* const>);
template void adam_step<double>(OptimizerState&, std::span<Param<double>* const>);

}  // namespace fiberspec::nn
