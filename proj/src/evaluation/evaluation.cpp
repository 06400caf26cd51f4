#include "fiberspec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fiberspec/error.hpp"

namespace fiberspec {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes, std::vector<std::string> labels)
    : n_(n_classes), labels_(std::move(labels)), counts_(n_classes * n_classes, 0) {
  if (labels_.empty()) {
    for (std::size_t i = 0; i < n_; ++i) labels_.push_back(std::to_string(i));
  }
  if (labels_.size() != n_) fail(ErrorCode::LengthMismatch, "label names do not match class count");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= n_ || predicted >= n_) {
    fail(ErrorCode::LabelOutOfRange, "label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                                         ") outside " + std::to_string(n_) + " classes");
  }
  ++counts_[truth * n_ + predicted];
}

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::size_t ConfusionMatrix::trace() const noexcept {
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += counts_[i * n_ + i];
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t t = 0;
  for (std::size_t j = 0; j < n_; ++j) t += at(truth, j);
  return t;
}

std::optional<double> ConfusionMatrix::accuracy() const {
  const auto t = total();
  if (t == 0) return std::nullopt;
  return static_cast<double>(trace()) / static_cast<double>(t);
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes,
                          std::vector<std::string> labels) {
  if (truth.size() != predicted.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                        std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix m(n_classes, std::move(labels));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0) fail(ErrorCode::LabelOutOfRange, "negative label");
    m.add(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
  }
  return m;
}

int majority_vote(ObjectPrediction& object) {
  if (object.pixel_labels.empty()) fail(ErrorCode::EmptyObject, "object " + object.object_id + " has no pixels");
  std::map<int, std::size_t> votes;
  for (int l : object.pixel_labels) ++votes[l];

  std::size_t top = 0;
  for (const auto& [label, n] : votes) top = std::max(top, n);
  std::vector<int> tied;
  for (const auto& [label, n] : votes) {
    if (n == top) tied.push_back(label);  // ascending label order
  }
  int winner = tied.front();
  if (tied.size() > 1 && !object.summed_probabilities.empty()) {
    double best = -1.0;
    for (int l : tied) {
      const double p = static_cast<std::size_t>(l) < object.summed_probabilities.size()
                           ? object.summed_probabilities[static_cast<std::size_t>(l)]
                           : 0.0;
      if (p > best) {
        best = p;
        winner = l;
      }
    }
  }
  std::size_t runner_up = 0;
  for (const auto& [label, n] : votes) {
    if (label != winner) runner_up = std::max(runner_up, n);
  }
  object.final_label = winner;
  object.margin = top - runner_up;
  return winner;
}

double ClassRates::pixel_accuracy() const {
  return pixels ? static_cast<double>(pixels_correct) / static_cast<double>(pixels) : 0.0;
}

double ClassRates::object_accuracy() const {
  return objects ? static_cast<double>(objects_correct) / static_cast<double>(objects) : 0.0;
}

EvaluationReport accuracy_report(std::span<const std::string> known_objects, std::span<const PixelRecord> pixels,
                                 std::vector<std::string> labels) {
  const std::set<std::string> known(known_objects.begin(), known_objects.end());
  const std::size_t n = labels.size();
  EvaluationReport report;
  report.labels = labels;
  report.pixel_confusion = ConfusionMatrix(n, labels);
  report.object_confusion = ConfusionMatrix(n, labels);

  std::vector<std::string> order;
  std::map<std::string, ObjectPrediction> objects;
  std::map<std::string, int> object_truth;
  for (const auto& px : pixels) {
    if (!known.count(px.object_id)) fail(ErrorCode::UnknownObject, "pixel refers to unknown object " + px.object_id);
    report.pixel_confusion.add(static_cast<std::size_t>(px.true_label), static_cast<std::size_t>(px.predicted_label));
    auto [it, inserted] = objects.try_emplace(px.object_id);
    if (inserted) {
      order.push_back(px.object_id);
      it->second.object_id = px.object_id;
      object_truth[px.object_id] = px.true_label;
    } else if (object_truth[px.object_id] != px.true_label) {
      fail(ErrorCode::ValidationError, "object " + px.object_id + " has pixels with different true labels");
    }
    auto& obj = it->second;
    obj.pixel_labels.push_back(px.predicted_label);
    if (!px.probabilities.empty()) {
      if (obj.summed_probabilities.empty()) obj.summed_probabilities.assign(px.probabilities.size(), 0.0);
      if (obj.summed_probabilities.size() != px.probabilities.size()) {
        fail(ErrorCode::LengthMismatch, "probability vectors differ in length within object " + px.object_id);
      }
      for (std::size_t k = 0; k < px.probabilities.size(); ++k) obj.summed_probabilities[k] += px.probabilities[k];
    }
  }

  report.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) report.per_class[c].label = labels[c];
  for (const auto& px : pixels) {
    auto& row = report.per_class[static_cast<std::size_t>(px.true_label)];
    ++row.pixels;
    if (px.true_label == px.predicted_label) ++row.pixels_correct;
  }
  for (const auto& id : order) {
    auto& obj = objects[id];
    majority_vote(obj);
    const int truth = object_truth[id];
    report.object_confusion.add(static_cast<std::size_t>(truth), static_cast<std::size_t>(obj.final_label));
    auto& row = report.per_class[static_cast<std::size_t>(truth)];
    ++row.objects;
    if (obj.final_label == truth) ++row.objects_correct;
    report.objects.push_back(obj);
  }
  report.pixel_accuracy = report.pixel_confusion.accuracy().value_or(0.0);
  report.object_accuracy = report.object_confusion.accuracy().value_or(0.0);
  return report;
}

// ---------------------------------------------------------------------------

double DetectionRow::pixel_accuracy() const {
  return pixels ? static_cast<double>(pixels_correct) / static_cast<double>(pixels) : 0.0;
}

double DetectionRow::object_accuracy() const {
  return objects ? static_cast<double>(objects_correct) / static_cast<double>(objects) : 0.0;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

DetectionReport detection_report(std::span<const std::string> known_objects, std::span<const DetectionRecord> records) {
  const std::set<std::string> known(known_objects.begin(), known_objects.end());
  struct ObjectAcc {
    std::string group;
    bool truth = false;
    std::vector<double> errors;
    std::size_t votes = 0;
  };
  std::vector<std::string> object_order;
  std::map<std::string, ObjectAcc> objects;
  std::vector<std::string> group_order;
  std::map<std::string, DetectionRow> rows;

  DetectionReport report;
  std::size_t pixels_correct = 0;
  for (const auto& r : records) {
    if (!known.count(r.object_id)) fail(ErrorCode::UnknownObject, "record refers to unknown object " + r.object_id);
    auto [oit, new_obj] = objects.try_emplace(r.object_id);
    if (new_obj) {
      object_order.push_back(r.object_id);
      oit->second.group = r.group;
      oit->second.truth = r.truth_target;
    } else if (oit->second.truth != r.truth_target || oit->second.group != r.group) {
      fail(ErrorCode::ValidationError, "object " + r.object_id + " has inconsistent truth or group");
    }
    oit->second.errors.push_back(r.error);
    if (r.predicted_target) ++oit->second.votes;

    auto [git, new_group] = rows.try_emplace(r.group);
    if (new_group) {
      group_order.push_back(r.group);
      git->second.group = r.group;
    }
    ++git->second.pixels;
    if (r.truth_target == r.predicted_target) {
      ++git->second.pixels_correct;
      ++pixels_correct;
    }
  }

  std::map<std::string, std::vector<double>> medians;
  std::size_t objects_correct = 0;
  for (const auto& id : object_order) {
    const auto& o = objects[id];
    const bool predicted = 2 * o.votes > o.errors.size();
    auto& row = rows[o.group];
    ++row.objects;
    if (predicted == o.truth) {
      ++row.objects_correct;
      ++objects_correct;
    }
    medians[o.group].push_back(median(o.errors));
  }
  for (const auto& g : group_order) {
    auto row = rows[g];
    row.median_object_error = median(medians[g]);
    report.rows.push_back(row);
  }
  report.pixel_accuracy = records.empty() ? 0.0 : static_cast<double>(pixels_correct) / static_cast<double>(records.size());
  report.object_accuracy =
      object_order.empty() ? 0.0 : static_cast<double>(objects_correct) / static_cast<double>(object_order.size());
  return report;
}

ReHistogram re_histogram(const std::vector<std::pair<std::string, std::vector<double>>>& groups, double threshold,
                         std::size_t bins) {
  if (bins < 1) fail(ErrorCode::ValidationError, "histogram needs at least one bin");
  ReHistogram h;
  h.threshold = threshold;
  double mx = 0.0;
  for (const auto& [name, values] : groups) {
    for (double v : values) mx = std::max(mx, v);
  }
  h.upper = mx > 0.0 ? 1.05 * mx : 1.0;
  h.bin_width = h.upper / static_cast<double>(bins);
  for (const auto& [name, values] : groups) {
    h.groups.push_back(name);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
      const auto idx = static_cast<std::size_t>(std::max(0.0, std::floor(v / h.bin_width)));
      ++counts[std::min(idx, bins - 1)];
    }
    h.counts.push_back(std::move(counts));
  }
  return h;
}

}  // namespace fiberspec
