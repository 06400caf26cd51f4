#pragma once

// Pixel- and object-level scoring of classifier and detector output.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fiberspec {

/// Rows are true labels, columns predicted labels.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::size_t n_classes, std::vector<std::string> labels = {});

  std::size_t n_classes() const noexcept { return n_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * n_ + predicted); }
  void add(std::size_t truth, std::size_t predicted);

  std::size_t total() const noexcept;
  std::size_t trace() const noexcept;
  std::size_t row_sum(std::size_t truth) const;
  /// trace / total; empty when there are no samples.
  std::optional<double> accuracy() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::string> labels_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes,
                          std::vector<std::string> labels = {});

struct ObjectPrediction {
  std::string object_id;
  std::vector<int> pixel_labels;
  std::vector<double> summed_probabilities;  // may be empty
  int final_label = -1;
  /// Votes for the winner minus votes for the runner-up.
  std::size_t margin = 0;
};

/// Modal pixel label; ties go to the larger summed probability, then to the
/// lower class index. Fills final_label and margin.
int majority_vote(ObjectPrediction& object);

/// One classified spectrum, as stored in the predictions CSV.
struct PixelRecord {
  std::string object_id;
  std::size_t pixel_index = 0;
  int true_label = 0;
  int predicted_label = 0;
  std::vector<double> probabilities;
};

struct ClassRates {
  std::string label;
  std::size_t pixels = 0;
  std::size_t pixels_correct = 0;
  std::size_t objects = 0;
  std::size_t objects_correct = 0;

  double pixel_accuracy() const;
  double object_accuracy() const;
};

struct EvaluationReport {
  std::vector<std::string> labels;
  double pixel_accuracy = 0.0;
  double object_accuracy = 0.0;
  ConfusionMatrix pixel_confusion;
  ConfusionMatrix object_confusion;
  std::vector<ClassRates> per_class;
  std::vector<ObjectPrediction> objects;
};

/// `known_objects` is the manifest's object id list; any pixel referring to an
/// object outside it raises UnknownObject. An object's true label is the
/// label of its pixels.
EvaluationReport accuracy_report(std::span<const std::string> known_objects, std::span<const PixelRecord> pixels,
                                 std::vector<std::string> labels);

/// One detector decision, as stored in the detection predictions CSV.
struct DetectionRecord {
  std::string object_id;
  std::size_t pixel_index = 0;
  std::string group;  // textile type used for the per-type table
  bool truth_target = false;
  bool predicted_target = false;
  double error = 0.0;
};

struct DetectionRow {
  std::string group;
  std::size_t pixels = 0;
  std::size_t pixels_correct = 0;
  std::size_t objects = 0;
  std::size_t objects_correct = 0;
  double median_object_error = 0.0;

  double pixel_accuracy() const;
  double object_accuracy() const;
};

struct DetectionReport {
  std::vector<DetectionRow> rows;  // in first-seen group order
  double pixel_accuracy = 0.0;
  double object_accuracy = 0.0;
};

DetectionReport detection_report(std::span<const std::string> known_objects, std::span<const DetectionRecord> records);

struct ReHistogram {
  double lower = 0.0;
  double upper = 0.0;
  double bin_width = 0.0;
  double threshold = 0.0;
  std::vector<std::string> groups;
  std::vector<std::vector<std::size_t>> counts;  // [group][bin]
};

/// Fixed-width bins over [0, 1.05 * max]. Each group needs at least one value.
ReHistogram re_histogram(const std::vector<std::pair<std::string, std::vector<double>>>& groups, double threshold,
                         std::size_t bins = 50);

// Rendering. All output is deterministic for identical input.
std::string render_text(const EvaluationReport& report);
std::string render_text(const DetectionReport& report, std::optional<double> threshold);
std::string confusion_csv(const ConfusionMatrix& m);
std::string detection_csv(const DetectionReport& report);
std::string confusion_svg(const ConfusionMatrix& m, const std::string& title);
std::string histogram_svg(const ReHistogram& h, const std::string& title);

/// "%.2f" of 100 * value, as in accuracy tables.
std::string percent2(double fraction);

}  // namespace fiberspec
