#include "fiberspec/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fiberspec/error.hpp"
#include "fiberspec/nn/optimizer.hpp"

namespace fiberspec::nn {

void TrainConfig::validate() const {
  if (!(initial_lr >= 0.0)) fail(ErrorCode::InvalidConfig, "initial_lr must be >= 0");
  if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) fail(ErrorCode::InvalidConfig, "lr_factor must be in (0, 1)");
  if (lr_patience < 1 || early_stop_patience < 1) fail(ErrorCode::InvalidConfig, "patience must be >= 1");
  if (max_epochs < 1) fail(ErrorCode::InvalidConfig, "max_epochs must be >= 1");
  if (!(min_lr >= 0.0)) fail(ErrorCode::InvalidConfig, "min_lr must be >= 0");
  if (!(improvement_delta >= 0.0)) fail(ErrorCode::InvalidConfig, "improvement_delta must be >= 0");
}

// ---------------------------------------------------------------------------

PlateauMonitor::PlateauMonitor(const TrainConfig& cfg, double initial_lr) : cfg_(cfg), lr_(initial_lr) {}

PlateauMonitor::Step PlateauMonitor::observe(double loss) {
  Step step;
  if (loss < best_ - cfg_.improvement_delta) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    plateau_count_ = 0;
    step.improved = true;
  } else {
    ++since_best_;
    ++plateau_count_;
    if (plateau_count_ >= cfg_.lr_patience) {
      const double reduced = std::min(lr_, std::max(lr_ * cfg_.lr_factor, cfg_.min_lr));
      step.lr_reduced = reduced < lr_;
      lr_ = reduced;
      plateau_count_ = 0;
    }
    step.stop = since_best_ >= cfg_.early_stop_patience;
  }
  ++epoch_;
  return step;
}

PlateauDecision lr_on_plateau(std::span<const double> history, double initial_lr, const TrainConfig& cfg) {
  PlateauMonitor monitor(cfg, initial_lr);
  PlateauDecision out{initial_lr, false};
  for (double loss : history) out.reduced = monitor.observe(loss).lr_reduced;
  out.learning_rate = monitor.learning_rate();
  return out;
}

EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience, double improvement_delta) {
  TrainConfig cfg;
  cfg.early_stop_patience = patience;
  cfg.improvement_delta = improvement_delta;
  PlateauMonitor monitor(cfg, 1.0);
  EarlyStopDecision out;
  for (double loss : history) {
    if (monitor.observe(loss).stop) {
      out.stop = true;
      break;
    }
  }
  out.best_epoch = monitor.best_epoch();
  return out;
}

std::vector<double> TrainHistory::val_losses() const {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(e.val_loss);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void check_data(const Network<T>& net, const TrainData<T>& data, LossKind loss, const char* what) {
  if (data.size() == 0) fail(ErrorCode::ValidationError, std::string(what) + " set is empty");
  if (loss == LossKind::cross_entropy && data.labels.size() != data.size()) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " labels do not match inputs");
  }
  if (loss == LossKind::mse && (data.targets.rank() == 0 || data.targets.dim(0) != data.size())) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " targets do not match inputs");
  }
  Shape expected = net.input_shape();
  expected.insert(expected.begin(), data.size());
  if (data.inputs.shape() != expected) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " inputs " + shape_to_string(data.inputs.shape()) +
                                       " do not match network input " + shape_to_string(net.input_shape()));
  }
}

template <class T>
struct Batch {
  Tensor<T> inputs;
  std::vector<int> labels;
  Tensor<T> targets;
};

template <class T>
Batch<T> make_batch(const TrainData<T>& data, std::span<const std::size_t> rows, LossKind loss) {
  Batch<T> b;
  b.inputs = data.inputs.gather_rows(rows);
  if (loss == LossKind::cross_entropy) {
    b.labels.reserve(rows.size());
    for (auto r : rows) b.labels.push_back(data.labels[r]);
  } else {
    b.targets = data.targets.gather_rows(rows);
  }
  return b;
}

template <class T>
LossResult<T> batch_loss(Network<T>& net, const Batch<T>& b, LossKind loss, Mode mode, Tensor<T>* out = nullptr) {
  if (loss == LossKind::cross_entropy) {
    auto logits = net.forward(b.inputs, mode, Head::logits);
    auto r = cross_entropy(logits, b.labels);
    if (out) *out = std::move(logits);
    return r;
  }
  auto y = net.forward(b.inputs, mode, Head::full);
  auto r = mse(y, b.targets);
  if (out) *out = std::move(y);
  return r;
}

template <class T>
std::vector<Tensor<T>> snapshot(Network<T>& net) {
  std::vector<Tensor<T>> out;
  for (auto* p : net.state()) out.push_back(p->value);
  return out;
}

template <class T>
void restore(Network<T>& net, const std::vector<Tensor<T>>& snap) {
  auto st = net.state();
  for (std::size_t i = 0; i < st.size(); ++i) st[i]->value = snap[i];
}

}  // namespace

template <class T>
double evaluate_loss(Network<T>& net, const TrainData<T>& data, LossKind loss, std::size_t batch_size,
                     double* accuracy) {
  check_data(net, data, loss, "evaluation");
  const std::size_t n = data.size();
  double total = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto b = make_batch(data, rows, loss);
    Tensor<T> out;
    const auto r = batch_loss(net, b, loss, Mode::eval, &out);
    total += r.loss * static_cast<double>(end - start);
    if (loss == LossKind::cross_entropy) {
      const std::size_t c = out.dim(1);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const T* row = out.raw() + i * c;
        const auto pred = static_cast<int>(std::max_element(row, row + c) - row);
        if (pred == b.labels[i]) ++correct;
      }
    }
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return total / static_cast<double>(n);
}

template <class T>
TrainHistory fit(Network<T>& net, const TrainData<T>& train, const TrainData<T>& val, const TrainConfig& cfg,
                 LossKind loss) {
  cfg.validate();
  check_data(net, train, loss, "training");
  check_data(net, val, loss, "validation");

  std::mt19937_64 shuffle_rng(cfg.seed);
  net.seed_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);

  OptimizerState opt;
  opt.learning_rate = cfg.initial_lr;
  PlateauMonitor monitor(cfg, cfg.initial_lr);
  auto params = net.parameters();

  TrainHistory history;
  auto best_state = snapshot(net);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr_used = opt.learning_rate;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const auto b = make_batch(train, rows, loss);
      const auto r = batch_loss(net, b, loss, Mode::train);
      if (!std::isfinite(r.loss)) fail(ErrorCode::Diverged, "training loss is not finite at epoch " + std::to_string(epoch));
      total += r.loss * static_cast<double>(rows.size());
      net.backward(r.grad, loss == LossKind::cross_entropy ? Head::logits : Head::full);
      adam_step<T>(opt, params);
    }
    const double train_loss = total / static_cast<double>(order.size());
    if (!std::isfinite(train_loss)) fail(ErrorCode::Diverged, "training loss is not finite at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.learning_rate = lr_used;
    double acc = 0.0;
    rec.val_loss = evaluate_loss(net, val, loss, cfg.batch_size, loss == LossKind::cross_entropy ? &acc : nullptr);
    if (loss == LossKind::cross_entropy) rec.val_accuracy = acc;
    if (!std::isfinite(rec.val_loss)) fail(ErrorCode::Diverged, "validation loss is not finite at epoch " + std::to_string(epoch));

    const auto step = monitor.observe(rec.val_loss);
    rec.improved = step.improved;
    if (step.improved) best_state = snapshot(net);
    opt.learning_rate = monitor.learning_rate();
    history.epochs.push_back(rec);
    if (step.stop) {
      history.early_stopped = true;
      break;
    }
  }
  history.best_epoch = monitor.best_epoch();
  restore(net, best_state);
  return history;
}

template double evaluate_loss(Network<float>&, const TrainData<float>&, LossKind, std::size_t, double*);
template double evaluate_loss(Network<double>&, const TrainData<double>&, LossKind, std::size_t, double*);
template TrainHistory fit(Network<float>&, const TrainData<float>&, const TrainData<float>&, const TrainConfig&, LossKind);
template TrainHistory fit(Network<double>&, const TrainData<double>&, const TrainData<double>&, const TrainConfig&, LossKind);

}  // namespace fiberspec::nn
