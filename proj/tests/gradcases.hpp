#pragma once

// Small 64-bit networks covering every layer kind and both losses, shared by
// the unit tests and the acceptance run.

#include <cstdint>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fiberspec/nn/gradcheck.hpp"
#include "fiberspec/nn/network.hpp"

namespace gradcases {

using fiberspec::nn::LayerSpec;
using fiberspec::nn::LossKind;
using fiberspec::nn::Network;
using fiberspec::nn::Shape;
using fiberspec::nn::Tensor;

struct Case {
  std::string name;
  Shape input;
  std::vector<LayerSpec> layers;
  LossKind loss;
  std::size_t batch;
};

inline std::vector<Case> all() {
  return {
      {"dense+relu+softmax / cross-entropy", {6},
       {LayerSpec::dense(6, 8), LayerSpec::relu(), LayerSpec::dense(8, 4), LayerSpec::softmax()},
       LossKind::cross_entropy, 5},
      {"conv1d / mse", {1, 12}, {LayerSpec::conv1d(1, 1, 3)}, LossKind::mse, 3},
      {"conv1d stride+padding+flatten / cross-entropy", {2, 11},
       {LayerSpec::conv1d(2, 3, 4, 2, 1), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(15, 3),
        LayerSpec::softmax()},
       LossKind::cross_entropy, 4},
      {"batchnorm1d / cross-entropy", {5},
       {LayerSpec::dense(5, 7), LayerSpec::batchnorm1d(7), LayerSpec::relu(), LayerSpec::dense(7, 3),
        LayerSpec::softmax()},
       LossKind::cross_entropy, 8},
      {"dropout / mse", {6}, {LayerSpec::dense(6, 10), LayerSpec::dropout(0.4), LayerSpec::dense(10, 3)},
       LossKind::mse, 6},
      {"softmax / mse", {4}, {LayerSpec::dense(4, 5), LayerSpec::softmax()}, LossKind::mse, 4},
      {"dense / cross-entropy", {3}, {LayerSpec::dense(3, 4)}, LossKind::cross_entropy, 6},
      {"classifier-shaped stack / cross-entropy", {1, 8},
       {LayerSpec::conv1d(1, 2, 3), LayerSpec::relu(), LayerSpec::conv1d(2, 2, 3), LayerSpec::relu(),
        LayerSpec::flatten(), LayerSpec::dense(8, 4), LayerSpec::batchnorm1d(4), LayerSpec::dropout(0.5),
        LayerSpec::relu(), LayerSpec::dense(4, 3), LayerSpec::softmax()},
       LossKind::cross_entropy, 4},
  };
}

// Smallest |input| over all ReLU layers for the dropout stream gradient_check uses.
inline double relu_margin(Network<double>& net, const Tensor<double>& x, std::uint64_t dropout_seed) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (net.specs()[i].kind != fiberspec::nn::LayerKind::relu) continue;
    net.seed_rng(dropout_seed);
    auto z = net.forward_prefix(x, i, fiberspec::nn::Mode::train);
    for (double v : z.storage()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

// Central differences are meaningless across a ReLU kink, so inputs are
// redrawn until every ReLU input clears `kink_margin`.
inline fiberspec::nn::GradCheckResult run(const Case& c, std::uint64_t seed, double step = 1e-3,
                                          double kink_margin = 0.02) {
  fiberspec::nn::GradCheckOptions opt;
  opt.step = step;
  opt.seed = seed;
  Network<double> net(c.input, c.layers);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Shape shape{c.batch};
  shape.insert(shape.end(), c.input.begin(), c.input.end());
  Tensor<double> x(shape);
  for (int attempt = 0;; ++attempt) {
    net.init_weights(seed + 1000 * attempt);
    // Nonzero biases so ReLU kinks are not all at the same place.
    for (auto* p : net.parameters())
      if (p->name == "bias" || p->name == "beta")
        for (auto& v : p->value.storage()) v = 0.1 * normal(rng);
    for (auto& v : x.storage()) v = normal(rng);
    if (attempt >= 1000 || relu_margin(net, x, opt.dropout_seed) > kink_margin) break;
  }

  const Shape out_sample = net.output_shape();
  std::vector<int> labels(c.batch);
  Tensor<double> targets;
  if (c.loss == LossKind::cross_entropy) {
    for (auto& l : labels) l = static_cast<int>(rng() % out_sample.back());
  } else {
    Shape ts{c.batch};
    ts.insert(ts.end(), out_sample.begin(), out_sample.end());
    targets = Tensor<double>(ts);
    for (auto& v : targets.storage()) v = normal(rng);
  }
  return fiberspec::nn::gradient_check(net, c.loss, x, labels, targets, opt);
}

}  // namespace gradcases
