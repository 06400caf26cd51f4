#include "fiberspec/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fiberspec::nn {

namespace {

double loss_value(Network<double>& net, LossKind loss, const Tensor<double>& inputs, std::span<const int> labels,
                  const Tensor<double>& targets, std::uint64_t dropout_seed, Tensor<double>* grad) {
  net.seed_rng(dropout_seed);
  if (loss == LossKind::cross_entropy) {
    auto logits = net.forward(inputs, Mode::train, Head::logits);
    auto r = cross_entropy(logits, labels);
    if (grad) *grad = std::move(r.grad);
    return r.loss;
  }
  auto y = net.forward(inputs, Mode::train, Head::full);
  auto r = mse(y, targets);
  if (grad) *grad = std::move(r.grad);
  return r.loss;
}

}  // namespace

GradCheckResult gradient_check(Network<double>& net, LossKind loss, const Tensor<double>& inputs,
                               std::span<const int> labels, const Tensor<double>& targets,
                               const GradCheckOptions& options) {
  Tensor<double> g;
  loss_value(net, loss, inputs, labels, targets, options.dropout_seed, &g);
  net.backward(g, loss == LossKind::cross_entropy ? Head::logits : Head::full);

  struct Coord {
    Param<double>* param;
    std::size_t index;
    double analytic;
  };
  std::vector<Coord> coords;
  for (auto* p : net.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) coords.push_back({p, i, p->grad[i]});
  }
  if (options.max_parameters > 0 && coords.size() > options.max_parameters) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_parameters);
  }

  GradCheckResult result;
  for (const auto& c : coords) {
    double& w = c.param->value[c.index];
    const double original = w;
    w = original + options.step;
    const double plus = loss_value(net, loss, inputs, labels, targets, options.dropout_seed, nullptr);
    w = original - options.step;
    const double minus = loss_value(net, loss, inputs, labels, targets, options.dropout_seed, nullptr);
    w = original;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double denom = std::max(1e-8, std::abs(c.analytic) + std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, std::abs(c.analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace fiberspec::nn
