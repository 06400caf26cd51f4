#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fiberspec/nn/optimizer.hpp"
#include "fiberspec/nn/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fiberspec;
using namespace fiberspec::nn;
using testing::code_of;

namespace {

Param<double> scalar_param(double value, double grad) {
  return {"w", Tensor<double>({1}, {value}), Tensor<double>({1}, {grad}), true};
}

// Two Gaussian clouds on either side of x0 + x1 = 0.
TrainData<double> separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  TrainData<double> d;
  d.inputs = Tensor<double>({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double c = label ? 1.5 : -1.5;
    d.inputs[2 * i] = c + noise(rng);
    d.inputs[2 * i + 1] = c + noise(rng);
    d.labels.push_back(label);
  }
  return d;
}

std::vector<double> flat_weights(Network<double>& net) {
  std::vector<double> out;
  for (auto* p : net.state()) out.insert(out.end(), p->value.storage().begin(), p->value.storage().end());
  return out;
}

}  // namespace

TEST_CASE("reduce on plateau") {
  TrainConfig cfg;
  const std::vector<double> improving{1.0, 0.9, 0.8};
  auto a = lr_on_plateau(improving, 1e-3, cfg);
  CHECK(a.learning_rate == 1e-3);
  CHECK_FALSE(a.reduced);

  const std::vector<double> flat{1.0, 1.0, 1.2, 1.0, 1.1, 1.0};
  auto b = lr_on_plateau(flat, 1e-3, cfg);
  CHECK(b.learning_rate == doctest::Approx(1e-3 * 0.2).epsilon(1e-15));
  CHECK(b.reduced);
  auto before = lr_on_plateau(std::span<const double>(flat).first(5), 1e-3, cfg);
  CHECK(before.learning_rate == 1e-3);

  const std::vector<double> reset{1.0, 1.1, 1.1, 0.9, 1.0, 1.0, 1.0, 1.0};
  auto c = lr_on_plateau(reset, 1e-3, cfg);
  CHECK(c.learning_rate == 1e-3);

  // The counter restarts after a reduction; the best loss does not.
  std::vector<double> long_flat(11, 2.0);
  long_flat[0] = 1.0;
  CHECK(lr_on_plateau(long_flat, 1e-3, cfg).learning_rate == doctest::Approx(1e-3 * 0.04).epsilon(1e-15));

  TrainConfig floor = cfg;
  floor.min_lr = 5e-4;
  CHECK(lr_on_plateau(flat, 1e-3, floor).learning_rate == 5e-4);

  TrainConfig delta = cfg;
  delta.improvement_delta = 0.05;
  const std::vector<double> tiny{1.0, 0.99, 0.98, 0.97, 0.96, 0.96};
  CHECK(lr_on_plateau(tiny, 1e-3, delta).reduced);
}

TEST_CASE("early stopping") {
  std::vector<double> dec(50);
  for (std::size_t i = 0; i < dec.size(); ++i) dec[i] = 1.0 / (i + 1.0);
  for (std::size_t n = 1; n <= dec.size(); ++n) CHECK_FALSE(early_stop(std::span<const double>(dec).first(n), 7).stop);

  const std::vector<double> a{0.5, 0.5, 0.6, 0.5, 0.7, 0.5, 0.5, 0.9};
  auto ra = early_stop(a, 7);
  CHECK(ra.stop);
  CHECK(ra.best_epoch == 0);
  CHECK_FALSE(early_stop(std::span<const double>(a).first(7), 7).stop);

  const std::vector<double> b{0.5, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
  auto rb = early_stop(b, 7);
  CHECK(rb.stop);
  CHECK(rb.best_epoch == 1);
}

TEST_CASE("plateau monitor shares one best-loss tracker") {
  TrainConfig cfg;
  PlateauMonitor m(cfg, 1e-3);
  CHECK(m.observe(1.0).improved);
  for (int i = 0; i < 4; ++i) CHECK_FALSE(m.observe(1.5).lr_reduced);
  auto fifth = m.observe(1.5);
  CHECK(fifth.lr_reduced);
  CHECK_FALSE(fifth.stop);
  CHECK_FALSE(m.observe(1.5).stop);
  CHECK(m.observe(1.5).stop);
  CHECK(m.best_epoch() == 0);
  CHECK(m.best_loss() == 1.0);
}

TEST_CASE("adam examples") {
  OptimizerState fresh;
  auto p = scalar_param(0.7, 0.0);
  std::vector<Param<double>*> ps{&p};
  adam_step<double>(fresh, ps);
  CHECK(p.value[0] == 0.7);
  CHECK(fresh.step == 1);

  for (double g : {1e-3, 0.25, -4.0, 300.0}) {
    OptimizerState s;
    auto q = scalar_param(1.0, g);
    std::vector<Param<double>*> qs{&q};
    adam_step<double>(s, qs);
    const double want = s.learning_rate * std::abs(g) / (std::abs(g) + s.epsilon);
    CHECK(std::abs(1.0 - q.value[0]) == doctest::Approx(want).epsilon(1e-9));
    CHECK((1.0 - q.value[0]) * g > 0.0);

    const double first = std::abs(1.0 - q.value[0]);
    const double mid = q.value[0];
    adam_step<double>(s, qs);
    CHECK(std::abs(mid - q.value[0]) <= first + 1e-12);
    CHECK(s.step == 2);
  }

  OptimizerState decay;
  auto r = scalar_param(0.0, 2.0);
  std::vector<Param<double>*> rs{&r};
  adam_step<double>(decay, rs);
  const double m1 = decay.first_moment[0][0], v1 = decay.second_moment[0][0];
  r.grad[0] = 0.0;
  adam_step<double>(decay, rs);
  CHECK(decay.first_moment[0][0] == doctest::Approx(0.9 * m1).epsilon(1e-15));
  CHECK(decay.second_moment[0][0] == doctest::Approx(0.999 * v1).epsilon(1e-15));
}

TEST_CASE("adam rejects non-finite gradients without side effects") {
  OptimizerState s;
  auto a = scalar_param(1.0, 0.5);
  auto b = scalar_param(2.0, std::numeric_limits<double>::infinity());
  std::vector<Param<double>*> ps{&a, &b};
  CHECK(code_of([&] { adam_step<double>(s, ps); }) == ErrorCode::NonFinite);
  CHECK(a.value[0] == 1.0);
  CHECK(b.value[0] == 2.0);
  CHECK(s.step == 0);
}

TEST_CASE("fit separates a linearly separable toy set") {
  auto train = separable(20, 1);
  Network<double> net({2}, {LayerSpec::dense(2, 2), LayerSpec::softmax()});
  net.init_weights(1);
  TrainConfig cfg;
  cfg.initial_lr = 0.01;
  cfg.batch_size = 4;
  cfg.seed = 1;
  auto h = fit(net, train, train, cfg, LossKind::cross_entropy);
  CHECK(h.epochs.size() <= 200);
  double acc = 0.0;
  evaluate_loss(net, train, LossKind::cross_entropy, 8, &acc);
  CHECK(acc == 1.0);
}

TEST_CASE("learning rate zero leaves weights unchanged") {
  auto train = separable(10, 2);
  Network<double> net({2}, {LayerSpec::dense(2, 4), LayerSpec::relu(), LayerSpec::dense(4, 2), LayerSpec::softmax()});
  net.init_weights(2);
  const auto before = flat_weights(net);
  TrainConfig cfg;
  cfg.initial_lr = 0.0;
  cfg.batch_size = 3;
  cfg.max_epochs = 12;
  fit(net, train, train, cfg, LossKind::cross_entropy);
  CHECK(flat_weights(net) == before);
}

TEST_CASE("fit is bit-reproducible") {
  auto train = separable(30, 3);
  auto val = separable(10, 4);
  auto once = [&](std::uint64_t seed) {
    Network<double> net({2}, {LayerSpec::dense(2, 6), LayerSpec::batchnorm1d(6), LayerSpec::dropout(0.3),
                              LayerSpec::relu(), LayerSpec::dense(6, 2), LayerSpec::softmax()});
    net.init_weights(7);
    TrainConfig cfg;
    cfg.initial_lr = 0.01;
    cfg.batch_size = 8;
    cfg.max_epochs = 15;
    cfg.seed = seed;
    auto h = fit(net, train, val, cfg, LossKind::cross_entropy);
    std::vector<double> trace;
    for (const auto& e : h.epochs) {
      trace.push_back(e.train_loss);
      trace.push_back(e.val_loss);
    }
    auto w = flat_weights(net);
    trace.insert(trace.end(), w.begin(), w.end());
    return trace;
  };
  const auto a = once(5);
  CHECK(a == once(5));
  CHECK(a != once(6));
}

TEST_CASE("fit restores the best epoch and honours early stopping") {
  auto train = separable(20, 5);
  auto val = separable(20, 6);
  for (auto& l : val.labels) l = 1 - l;  // validation gets worse as training improves
  Network<double> net({2}, {LayerSpec::dense(2, 2), LayerSpec::softmax()});
  net.init_weights(3);
  TrainConfig cfg;
  cfg.initial_lr = 0.05;
  cfg.batch_size = 5;
  auto h = fit(net, train, val, cfg, LossKind::cross_entropy);
  CHECK(h.early_stopped);
  CHECK(h.epochs.size() == h.best_epoch + 1 + cfg.early_stop_patience);
  const double restored = evaluate_loss(net, val, LossKind::cross_entropy, 64);
  CHECK(restored == doctest::Approx(h.epochs[h.best_epoch].val_loss).epsilon(1e-12));
}

TEST_CASE("fit validates its inputs") {
  Network<double> net({2}, {LayerSpec::dense(2, 2), LayerSpec::softmax()});
  TrainData<double> empty;
  auto ok = separable(4, 1);
  CHECK(code_of([&] { fit(net, empty, ok, TrainConfig{}, LossKind::cross_entropy); }) == ErrorCode::ValidationError);
  TrainConfig bad;
  bad.lr_factor = 1.0;
  CHECK(code_of([&] { fit(net, ok, ok, bad, LossKind::cross_entropy); }) == ErrorCode::InvalidConfig);
  auto wrong = ok;
  wrong.labels.pop_back();
  CHECK(code_of([&] { fit(net, wrong, ok, TrainConfig{}, LossKind::cross_entropy); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("fit reports divergence") {
  TrainData<double> d;
  d.inputs = Tensor<double>({4, 1}, {1e200, -1e200, 1e200, -1e200});
  d.targets = Tensor<double>({4, 1}, {1e200, 1e200, -1e200, -1e200});
  Network<double> net({1}, {LayerSpec::dense(1, 1)});
  net.init_weights(1);
  TrainConfig cfg;
  cfg.batch_size = 2;
  auto c = code_of([&] { fit(net, d, d, cfg, LossKind::mse); });
  CHECK((c == ErrorCode::Diverged || c == ErrorCode::NonFinite));
}
