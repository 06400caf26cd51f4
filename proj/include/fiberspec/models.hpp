#pragma once

// The two textile models: a 12-class 1D-CNN fiber classifier and a dense
// autoencoder that flags spectra which do not reconstruct like the target fiber.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fiberspec/nn/checkpoint.hpp"
#include "fiberspec/nn/train.hpp"
#include "fiberspec/spectra.hpp"

namespace fiberspec {

/// Class labels of the supervised model, in output order.
const std::vector<std::string>& default_class_labels();

struct ClassifierSpec {
  std::size_t input_len = 400;
  std::vector<std::size_t> conv_filters{20, 32};
  std::size_t kernel = 5;
  std::size_t dense_units = 128;
  double dropout = 0.5;
  std::size_t n_classes = 12;

  void validate() const;
};

struct AutoencoderSpec {
  std::size_t input_len = 400;
  std::size_t hidden = 100;
  std::size_t latent = 20;

  void validate() const;
  /// 400-100-100-20-100-100-400 for the defaults.
  std::vector<std::size_t> widths() const;
};

/// conv(20,k5)+relu, conv(32,k5)+relu, flatten, dense, batchnorm, dropout,
/// relu, dense(n_classes), softmax.
nn::NetworkBuilder classifier_layout(const ClassifierSpec& spec);
nn::Network<float> build_classifier(const ClassifierSpec& spec, std::uint64_t seed = 0);

nn::NetworkBuilder autoencoder_layout(const AutoencoderSpec& spec);
nn::Network<float> build_autoencoder(const AutoencoderSpec& spec, std::uint64_t seed = 0);

/// Index of the layer that outputs the latent code (after its ReLU).
std::size_t autoencoder_latent_end(const AutoencoderSpec& spec);

/// Training defaults for each model.
nn::TrainConfig classifier_train_defaults();
nn::TrainConfig autoencoder_train_defaults();

/// Stacks equal-length spectra into [N, 1, L] (classifier) or [N, L] (autoencoder).
nn::Tensor<float> spectra_tensor(std::span<const Spectrum> spectra, bool channel_axis);

struct TrainedModel {
  nn::Network<float> network;
  nn::TrainHistory history;
};

TrainedModel train_classifier(std::span<const Spectrum> train, std::span<const int> train_labels,
                              std::span<const Spectrum> val, std::span<const int> val_labels,
                              const nn::TrainConfig& cfg, const ClassifierSpec& spec = {});

TrainedModel train_autoencoder(std::span<const Spectrum> train, std::span<const Spectrum> val,
                               const nn::TrainConfig& cfg, const AutoencoderSpec& spec = {});

struct PixelPrediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Eval-mode forward; argmax with lowest-index tie-break.
std::vector<PixelPrediction> predict_pixels(nn::Network<float>& classifier, std::span<const Spectrum> spectra);

/// Per-spectrum mean squared reconstruction error, accumulated in double.
std::vector<double> reconstruction_error(nn::Network<float>& autoencoder, std::span<const Spectrum> spectra);

/// Empirical quantile with linear interpolation between order statistics.
double fit_threshold(std::span<const double> errors, double quantile = 0.95);

struct DetectorModel {
  nn::Network<float> network;
  double threshold = 0.0;
  double quantile = 0.95;
  std::string target_label;
};

struct PixelDecision {
  double error = 0.0;
  bool target = false;
};

struct ObjectDecision {
  std::string object_id;
  std::vector<PixelDecision> pixels;
  std::size_t target_votes = 0;
  bool target = false;
};

struct SpectraGroup {
  std::string object_id;
  std::vector<Spectrum> spectra;
};

/// Pixel is target iff RE <= threshold; object is target iff strictly more
/// than half of its pixels are.
std::vector<ObjectDecision> detect(DetectorModel& detector, std::span<const SpectraGroup> objects);

/// Object vote from pixel decisions alone.
bool object_is_target(std::span<const PixelDecision> pixels);

nn::Metadata detector_metadata(const DetectorModel& detector);
void save_detector(DetectorModel& detector, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

/// Class label list stored in a classifier checkpoint ("labels" metadata,
/// '|' separated).
std::string join_labels(std::span<const std::string> labels);
std::vector<std::string> split_labels(const std::string& joined);

}  // namespace fiberspec
