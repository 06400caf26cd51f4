#include "fiberspec/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "fiberspec/error.hpp"

namespace fiberspec {

const std::vector<std::string>& default_class_labels() {
  static const std::vector<std::string> labels{"C1", "P1", "S1", "L1", "N1", "W1",
                                               "V1", "VLP1", "CP1 9:1", "CP1 8:2", "CP1 7:3", "CE1"};
  return labels;
}

void ClassifierSpec::validate() const {
  if (n_classes < 2) fail(ErrorCode::SpecInvalid, "classifier needs at least 2 classes");
  if (conv_filters.empty()) fail(ErrorCode::SpecInvalid, "classifier needs at least one conv layer");
  if (kernel < 1 || dense_units < 1) fail(ErrorCode::SpecInvalid, "kernel and dense_units must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::SpecInvalid, "dropout must be in [0, 1)");
  if (input_len < conv_filters.size() * (kernel - 1) + 1) {
    fail(ErrorCode::SpecInvalid, "input_len too short for the conv stack");
  }
}

void AutoencoderSpec::validate() const {
  if (input_len < 1 || hidden < 1 || latent < 1) fail(ErrorCode::SpecInvalid, "autoencoder widths must be >= 1");
}

std::vector<std::size_t> AutoencoderSpec::widths() const {
  return {input_len, hidden, hidden, latent, hidden, hidden, input_len};
}

nn::NetworkBuilder classifier_layout(const ClassifierSpec& spec) {
  spec.validate();
  nn::NetworkBuilder b({1, spec.input_len});
  for (auto filters : spec.conv_filters) b.conv1d(filters, spec.kernel).relu();
  b.flatten().dense(spec.dense_units).batchnorm1d().dropout(spec.dropout).relu().dense(spec.n_classes).softmax();
  return b;
}

nn::Network<float> build_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  auto net = classifier_layout(spec).build<float>();
  net.init_weights(seed);
  return net;
}

nn::NetworkBuilder autoencoder_layout(const AutoencoderSpec& spec) {
  spec.validate();
  const auto w = spec.widths();
  nn::NetworkBuilder b({w.front()});
  for (std::size_t i = 1; i < w.size(); ++i) {
    b.dense(w[i]);
    if (i + 1 < w.size()) b.relu();
  }
  return b;
}

nn::Network<float> build_autoencoder(const AutoencoderSpec& spec, std::uint64_t seed) {
  auto net = autoencoder_layout(spec).build<float>();
  net.init_weights(seed);
  return net;
}

std::size_t autoencoder_latent_end(const AutoencoderSpec&) {
  // dense+relu, dense+relu, dense(latent)+relu
  return 6;
}

nn::TrainConfig classifier_train_defaults() {
  nn::TrainConfig cfg;
  cfg.initial_lr = 1e-3;
  cfg.batch_size = 128;
  cfg.lr_factor = 0.2;
  cfg.lr_patience = 5;
  cfg.early_stop_patience = 7;
  return cfg;
}

nn::TrainConfig autoencoder_train_defaults() {
  nn::TrainConfig cfg = classifier_train_defaults();
  cfg.batch_size = 16;
  cfg.lr_factor = 0.5;
  return cfg;
}

nn::Tensor<float> spectra_tensor(std::span<const Spectrum> spectra, bool channel_axis) {
  const std::size_t len = spectra.empty() ? 0 : spectra.front().size();
  std::vector<float> data;
  data.reserve(spectra.size() * len);
  for (const auto& s : spectra) {
    if (s.size() != len) fail(ErrorCode::ShapeMismatch, "spectra have different lengths");
    for (double v : s.values) data.push_back(static_cast<float>(v));
  }
  nn::Shape shape = channel_axis ? nn::Shape{spectra.size(), 1, len} : nn::Shape{spectra.size(), len};
  return nn::Tensor<float>(std::move(shape), std::move(data));
}

TrainedModel train_classifier(std::span<const Spectrum> train, std::span<const int> train_labels,
                              std::span<const Spectrum> val, std::span<const int> val_labels,
                              const nn::TrainConfig& cfg, const ClassifierSpec& spec) {
  spec.validate();
  const std::set<int> classes(train_labels.begin(), train_labels.end());
  if (classes.size() < 2) fail(ErrorCode::ValidationError, "classifier training needs at least 2 classes");
  for (int l : classes) {
    if (l < 0 || static_cast<std::size_t>(l) >= spec.n_classes) {
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(l) + " outside [0, n_classes)");
    }
  }
  for (const auto* set : {&train, &val}) {
    for (const auto& s : *set) {
      if (s.size() != spec.input_len) {
        fail(ErrorCode::ShapeMismatch, "spectrum length " + std::to_string(s.size()) + " but classifier input is " +
                                           std::to_string(spec.input_len));
      }
    }
  }
  nn::TrainData<float> tr{spectra_tensor(train, true), {train_labels.begin(), train_labels.end()}, {}};
  nn::TrainData<float> va{spectra_tensor(val, true), {val_labels.begin(), val_labels.end()}, {}};
  auto net = build_classifier(spec, cfg.seed);
  auto history = nn::fit(net, tr, va, cfg, nn::LossKind::cross_entropy);
  return {std::move(net), std::move(history)};
}

TrainedModel train_autoencoder(std::span<const Spectrum> train, std::span<const Spectrum> val,
                               const nn::TrainConfig& cfg, const AutoencoderSpec& spec) {
  spec.validate();
  auto tr_x = spectra_tensor(train, false);
  auto va_x = spectra_tensor(val, false);
  nn::TrainData<float> tr{tr_x, {}, tr_x};
  nn::TrainData<float> va{va_x, {}, va_x};
  auto net = build_autoencoder(spec, cfg.seed);
  auto history = nn::fit(net, tr, va, cfg, nn::LossKind::mse);
  return {std::move(net), std::move(history)};
}

std::vector<PixelPrediction> predict_pixels(nn::Network<float>& classifier, std::span<const Spectrum> spectra) {
  std::vector<PixelPrediction> out;
  if (spectra.empty()) return out;
  const bool channel_axis = classifier.input_shape().size() == 2;
  const auto x = spectra_tensor(spectra, channel_axis);
  const auto probs = classifier.forward(x, nn::Mode::eval, nn::Head::full);
  if (probs.rank() != 2) fail(ErrorCode::ShapeMismatch, "classifier output is not [N, C]");
  const std::size_t c = probs.dim(1);
  out.reserve(spectra.size());
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    PixelPrediction p;
    p.probabilities.assign(probs.raw() + i * c, probs.raw() + (i + 1) * c);
    p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                               p.probabilities.begin());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> reconstruction_error(nn::Network<float>& autoencoder, std::span<const Spectrum> spectra) {
  std::vector<double> out;
  if (spectra.empty()) return out;
  const auto x = spectra_tensor(spectra, false);
  const auto y = autoencoder.forward(x, nn::Mode::eval, nn::Head::full);
  if (y.shape() != x.shape()) fail(ErrorCode::ShapeMismatch, "autoencoder output shape differs from input");
  const std::size_t len = x.dim(1);
  out.reserve(spectra.size());
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double d = static_cast<double>(y[i * len + j]) - spectra[i].values[j];
      acc += d * d;
    }
    out.push_back(acc / static_cast<double>(len));
  }
  return out;
}

double fit_threshold(std::span<const double> errors, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) fail(ErrorCode::ValidationError, "quantile must be in (0, 1)");
  if (errors.size() < 20) {
    fail(ErrorCode::TooFewSamples, "threshold needs at least 20 errors, got " + std::to_string(errors.size()));
  }
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  // 1-indexed h = (n - 1) q + 1
  const double h = static_cast<double>(sorted.size() - 1) * quantile + 1.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  const double frac = h - std::floor(h);
  return sorted[lo - 1] + frac * (sorted[hi - 1] - sorted[lo - 1]);
}

bool object_is_target(std::span<const PixelDecision> pixels) {
  if (pixels.empty()) fail(ErrorCode::EmptyObject, "object has no pixels");
  const auto votes = static_cast<std::size_t>(
      std::count_if(pixels.begin(), pixels.end(), [](const PixelDecision& p) { return p.target; }));
  return 2 * votes > pixels.size();
}

std::vector<ObjectDecision> detect(DetectorModel& detector, std::span<const SpectraGroup> objects) {
  if (!(detector.threshold > 0.0)) fail(ErrorCode::ValidationError, "detector threshold is not fitted");
  std::vector<ObjectDecision> out;
  out.reserve(objects.size());
  for (const auto& obj : objects) {
    if (obj.spectra.empty()) fail(ErrorCode::EmptyObject, "object " + obj.object_id + " has no spectra");
    ObjectDecision d;
    d.object_id = obj.object_id;
    for (double re : reconstruction_error(detector.network, obj.spectra)) {
      d.pixels.push_back({re, re <= detector.threshold});
      if (re <= detector.threshold) ++d.target_votes;
    }
    d.target = object_is_target(d.pixels);
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_meta_real(const nn::Metadata& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) fail(ErrorCode::HeaderMismatch, "checkpoint lacks metadata '" + key + "'");
  double v = 0.0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorCode::HeaderMismatch, "bad metadata value for " + key);
  return v;
}

}  // namespace

nn::Metadata detector_metadata(const DetectorModel& detector) {
  return {{"model", "autoencoder"},
          {"threshold", format_real(detector.threshold)},
          {"quantile", format_real(detector.quantile)},
          {"target_label", detector.target_label},
          {"init", "kaiming_uniform"}};
}

void save_detector(DetectorModel& detector, const std::filesystem::path& path) {
  nn::save_checkpoint(detector.network, detector_metadata(detector), path);
}

DetectorModel load_detector(const std::filesystem::path& path) {
  auto ckpt = nn::load_checkpoint(path);
  DetectorModel d{std::move(ckpt.network), 0.0, 0.95, {}};
  d.threshold = parse_meta_real(ckpt.meta, "threshold");
  d.quantile = parse_meta_real(ckpt.meta, "quantile");
  const auto it = ckpt.meta.find("target_label");
  if (it == ckpt.meta.end()) fail(ErrorCode::HeaderMismatch, "detector checkpoint lacks target_label");
  d.target_label = it->second;
  return d;
}

std::string join_labels(std::span<const std::string> labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].find('|') != std::string::npos) fail(ErrorCode::ValidationError, "label contains '|'");
    if (i) out += '|';
    out += labels[i];
  }
  return out;
}

std::vector<std::string> split_labels(const std::string& joined) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto bar = joined.find('|', pos);
    out.push_back(joined.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos));
    if (bar == std::string::npos) break;
    pos = bar + 1;
  }
  return out;
}

}  // namespace fiberspec
