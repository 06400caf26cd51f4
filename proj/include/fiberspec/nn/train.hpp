#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fiberspec/nn/loss.hpp"
#include "fiberspec/nn/network.hpp"

namespace fiberspec::nn {

struct TrainConfig {
  double initial_lr = 1e-3;
  std::size_t batch_size = 128;
  double lr_factor = 0.2;
  std::size_t lr_patience = 5;
  std::size_t early_stop_patience = 7;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  double min_lr = 1e-6;
  double improvement_delta = 0.0;

  void validate() const;
};

struct PlateauDecision {
  double learning_rate = 0.0;
  bool reduced = false;  // reduced on the last epoch of the history
};

/// Replays the reduce-on-plateau rule over a validation-loss history.
PlateauDecision lr_on_plateau(std::span<const double> history, double initial_lr, const TrainConfig& cfg);

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;
};

EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience,
                             double improvement_delta = 0.0);

/// Incremental form of both rules sharing one best-loss tracker. An epoch
/// improves iff its loss is strictly below best - delta.
class PlateauMonitor {
 public:
  PlateauMonitor(const TrainConfig& cfg, double initial_lr);

  struct Step {
    bool improved = false;
    bool lr_reduced = false;
    bool stop = false;
  };

  Step observe(double loss);

  double learning_rate() const noexcept { return lr_; }
  double best_loss() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

 private:
  TrainConfig cfg_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t since_best_ = 0;
  std::size_t plateau_count_ = 0;
};

/// Inputs plus either class labels (cross-entropy) or targets (MSE).
template <class T>
struct TrainData {
  Tensor<T> inputs;
  std::vector<int> labels;
  Tensor<T> targets;

  std::size_t size() const { return inputs.rank() ? inputs.dim(0) : 0; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();  // cross-entropy only
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;

  std::vector<double> val_losses() const;
};

/// Mean loss over `data` in eval mode, in batches of `batch_size`.
template <class T>
double evaluate_loss(Network<T>& net, const TrainData<T>& data, LossKind loss, std::size_t batch_size,
                     double* accuracy = nullptr);

/// Mini-batch Adam training with reduce-on-plateau and early stopping. The
/// network ends holding the weights of the best validation epoch.
template <class T>
TrainHistory fit(Network<T>& net, const TrainData<T>& train, const TrainData<T>& val,
                 const TrainConfig& cfg, LossKind loss);

}  // namespace fiberspec::nn
