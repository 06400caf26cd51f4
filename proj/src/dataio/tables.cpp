#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "fiberspec/dataio.hpp"
#include "fiberspec/error.hpp"

namespace fiberspec {

namespace {

void require_utf8(std::string_view text, std::string_view what) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == '\n') ++line;
    std::size_t len = 1;
    if (c >= 0x80) {
      if ((c & 0xE0) == 0xC0 && c >= 0xC2) len = 2;
      else if ((c & 0xF0) == 0xE0) len = 3;
      else if ((c & 0xF8) == 0xF0 && c <= 0xF4) len = 4;
      else len = 0;
      if (len == 0 || i + len > text.size()) {
        fail(ErrorCode::BadUtf8, std::string(what) + ": invalid UTF-8 on line " + std::to_string(line));
      }
      for (std::size_t k = 1; k < len; ++k) {
        if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
          fail(ErrorCode::BadUtf8, std::string(what) + ": invalid UTF-8 on line " + std::to_string(line));
        }
      }
    }
    i += len;
  }
}

// Yields (line number, content) for non-empty lines.
std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t pos = 0, n = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    ++n;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.emplace_back(n, line);
    pos = end + 1;
  }
  return out;
}

std::string line_ref(std::size_t n) { return "line " + std::to_string(n); }

std::size_t parse_count(std::string_view s, std::string_view what) {
  const double v = parse_double(s, what);
  if (v < 0 || v != std::floor(v)) fail(ErrorCode::ValidationError, std::string(what) + " must be a count");
  return static_cast<std::size_t>(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Spectra CSV

std::string spectra_csv(std::span<const LabeledSpectrum> rows) {
  const std::size_t bands = rows.empty() ? 0 : rows.front().spectrum.size();
  std::string out = "object_id,label";
  for (std::size_t c = 0; c < bands; ++c) out += ",c" + std::to_string(c);
  out += '\n';
  for (const auto& r : rows) {
    if (r.spectrum.size() != bands) fail(ErrorCode::ShapeMismatch, "spectra differ in length");
    out += csv_escape(r.object_id);
    out += ',';
    out += csv_escape(r.label);
    for (double v : r.spectrum.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_spectra_csv(const std::filesystem::path& path, std::span<const LabeledSpectrum> rows) {
  write_text_file(path, spectra_csv(rows));
}

std::vector<LabeledSpectrum> parse_spectra_csv(std::string_view text, Stage stage, std::size_t bands) {
  require_utf8(text, "spectra file");
  const auto lines = lines_of(text);
  if (lines.empty()) fail(ErrorCode::ShapeMismatch, "spectra file has no header row");
  const auto header = split_csv_line(lines.front().second);
  if (header.size() < 2 || header[0] != "object_id" || header[1] != "label") {
    fail(ErrorCode::ShapeMismatch, "spectra header must start with object_id,label");
  }
  if (header.size() != bands + 2) {
    fail(ErrorCode::ShapeMismatch, "header declares " + std::to_string(header.size() - 2) + " channels, expected " +
                                       std::to_string(bands));
  }
  std::vector<LabeledSpectrum> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto [n, line] = lines[i];
    const auto fields = split_csv_line(line);
    if (fields.size() != bands + 2) {
      fail(ErrorCode::ShapeMismatch, line_ref(n) + ": " + std::to_string(fields.size() > 2 ? fields.size() - 2 : 0) +
                                         " channels, expected " + std::to_string(bands));
    }
    LabeledSpectrum row{fields[0], fields[1], Spectrum{std::vector<double>(bands), stage}};
    for (std::size_t c = 0; c < bands; ++c) {
      row.spectrum.values[c] = parse_double(fields[c + 2], line_ref(n));
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<LabeledSpectrum> read_spectra_csv(const std::filesystem::path& path, Stage stage, std::size_t bands) {
  try {
    return parse_spectra_csv(read_text_file(path), stage, bands);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    const std::string detail = std::string(e.what()).substr(to_string(e.code()).size() + 2);
    fail(e.code(), path.string() + ": " + detail);
  }
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries) {
  for (auto& e : entries) add(std::move(e));
}

void DatasetManifest::add(ManifestEntry entry) {
  if (entry.object_id.empty()) fail(ErrorCode::ValidationError, "manifest entry without object_id");
  if (find(entry.object_id)) fail(ErrorCode::ValidationError, "duplicate object_id " + entry.object_id);
  entries_.push_back(std::move(entry));
}

const ManifestEntry* DatasetManifest::find(std::string_view object_id) const {
  for (const auto& e : entries_) {
    if (e.object_id == object_id) return &e;
  }
  return nullptr;
}

const ManifestEntry& DatasetManifest::at(std::string_view object_id) const {
  const auto* e = find(object_id);
  if (!e) fail(ErrorCode::UnknownObject, "object " + std::string(object_id) + " is not in the manifest");
  return *e;
}

std::vector<std::string> DatasetManifest::object_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries_) ids.push_back(e.object_id);
  return ids;
}

void DatasetManifest::validate(std::span<const std::string> labels) const {
  static const std::set<std::string> splits{"train", "val", "test", "D1", "D2", "D3", "D4", "D5", "D6"};
  for (const auto& e : entries_) {
    if (!splits.count(e.split)) fail(ErrorCode::ValidationError, "object " + e.object_id + ": unknown split '" + e.split + "'");
    if (!labels.empty() && std::find(labels.begin(), labels.end(), e.label) == labels.end()) {
      fail(ErrorCode::ValidationError, "object " + e.object_id + ": label '" + e.label + "' not in label set");
    }
  }
}

std::string manifest_csv(const DatasetManifest& manifest) {
  std::string out = "object_id,label,fiber,structure,color,split,source,row_offset\n";
  for (const auto& e : manifest.entries()) {
    for (const auto* f : {&e.object_id, &e.label, &e.fiber, &e.structure, &e.color, &e.split, &e.source}) {
      out += csv_escape(*f);
      out += ',';
    }
    out += std::to_string(e.row_offset);
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest_csv(std::string_view text) {
  require_utf8(text, "manifest");
  const auto lines = lines_of(text);
  if (lines.empty() || split_csv_line(lines.front().second) !=
                           std::vector<std::string>{"object_id", "label", "fiber", "structure", "color", "split",
                                                    "source", "row_offset"}) {
    fail(ErrorCode::ShapeMismatch, "manifest header must be object_id,label,fiber,structure,color,split,source,row_offset");
  }
  DatasetManifest m;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i].second);
    if (f.size() != 8) fail(ErrorCode::ShapeMismatch, "manifest " + line_ref(lines[i].first) + ": expected 8 fields");
    m.add({f[0], f[1], f[2], f[3], f[4], f[5], f[6], parse_count(f[7], "row_offset")});
  }
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_text_file(path, manifest_csv(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& path) { return parse_manifest_csv(read_text_file(path)); }

std::optional<int> class_of(const DatasetManifest& manifest, std::span<const std::string> labels,
                            const std::string& textile_type) {
  const auto direct = std::find(labels.begin(), labels.end(), textile_type);
  if (direct != labels.end()) return static_cast<int>(direct - labels.begin());
  std::string fiber;
  for (const auto& e : manifest.entries()) {
    if (e.label == textile_type) {
      fiber = e.fiber;
      break;
    }
  }
  if (fiber.empty()) return std::nullopt;
  for (const auto& e : manifest.entries()) {
    if (e.fiber != fiber) continue;
    const auto it = std::find(labels.begin(), labels.end(), e.label);
    if (it != labels.end()) return static_cast<int>(it - labels.begin());
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Splits

DatasetSplit stratified_split(std::span<const std::string> labels, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) fail(ErrorCode::ValidationError, "split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    fail(ErrorCode::ValidationError, "split ratios must sum to 1");
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::string too_few;
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < 3) too_few += (too_few.empty() ? "" : ", ") + label + " (" + std::to_string(idx.size()) + ")";
  }
  if (!too_few.empty()) fail(ErrorCode::TooFewSamples, "classes with fewer than 3 samples: " + too_few);

  DatasetSplit split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [label, idx] : by_class) {
    // Fisher-Yates with explicit modulo draws; std::shuffle's use of the
    // engine is implementation-defined.
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    const double n = static_cast<double>(idx.size());
    std::size_t n_val = static_cast<std::size_t>(std::llround(n * ratios[1]));
    std::size_t n_test = static_cast<std::size_t>(std::llround(n * ratios[2]));
    while (n_val + n_test >= idx.size()) {
      if (n_test >= n_val && n_test > 0) --n_test;
      else --n_val;
    }
    const std::size_t n_train = idx.size() - n_val - n_test;
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.insert(split.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                     idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string split_csv(const DatasetSplit& split, std::span<const LabeledSpectrum> rows) {
  std::vector<const char*> tag(rows.size(), nullptr);
  for (auto i : split.train) tag.at(i) = "train";
  for (auto i : split.val) tag.at(i) = "val";
  for (auto i : split.test) tag.at(i) = "test";
  std::string out = "index,object_id,split\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!tag[i]) fail(ErrorCode::ValidationError, "row " + std::to_string(i) + " is in no split");
    out += std::to_string(i) + ',' + csv_escape(rows[i].object_id) + ',' + tag[i] + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction tables

std::string predictions_csv(std::span<const PixelRecord> records, std::span<const std::string> labels) {
  std::string out = "object_id,pixel_index,true_label,pred_label";
  for (const auto& l : labels) out += ',' + csv_escape("p_" + l);
  out += '\n';
  auto name = [&](int k) -> const std::string& {
    if (k < 0 || static_cast<std::size_t>(k) >= labels.size()) fail(ErrorCode::LabelOutOfRange, "label index " + std::to_string(k));
    return labels[static_cast<std::size_t>(k)];
  };
  for (const auto& r : records) {
    out += csv_escape(r.object_id) + ',' + std::to_string(r.pixel_index) + ',' + csv_escape(name(r.true_label)) + ',' +
           csv_escape(name(r.predicted_label));
    if (r.probabilities.size() != labels.size()) fail(ErrorCode::LengthMismatch, "probability vector length");
    for (double p : r.probabilities) out += ',' + format_double(p);
    out += '\n';
  }
  return out;
}

PredictionTable parse_predictions_csv(std::string_view text) {
  require_utf8(text, "predictions");
  const auto lines = lines_of(text);
  if (lines.empty()) fail(ErrorCode::ShapeMismatch, "predictions file is empty");
  const auto header = split_csv_line(lines.front().second);
  if (header.size() < 6 || header[0] != "object_id" || header[1] != "pixel_index" || header[2] != "true_label" ||
      header[3] != "pred_label") {
    fail(ErrorCode::ShapeMismatch, "predictions header must be object_id,pixel_index,true_label,pred_label,p_...");
  }
  PredictionTable t;
  for (std::size_t k = 4; k < header.size(); ++k) {
    if (header[k].rfind("p_", 0) != 0) fail(ErrorCode::ShapeMismatch, "probability column '" + header[k] + "'");
    t.labels.push_back(header[k].substr(2));
  }
  auto index_of = [&](const std::string& l, std::size_t n) {
    const auto it = std::find(t.labels.begin(), t.labels.end(), l);
    if (it == t.labels.end()) fail(ErrorCode::LabelOutOfRange, line_ref(n) + ": label '" + l + "' has no column");
    return static_cast<int>(it - t.labels.begin());
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto [n, line] = lines[i];
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) fail(ErrorCode::ShapeMismatch, line_ref(n) + ": field count");
    PixelRecord r{f[0], parse_count(f[1], line_ref(n)), index_of(f[2], n), index_of(f[3], n), {}};
    for (std::size_t k = 4; k < f.size(); ++k) r.probabilities.push_back(parse_double(f[k], line_ref(n)));
    t.records.push_back(std::move(r));
  }
  return t;
}

std::string detections_csv(std::span<const DetectionRecord> records) {
  std::string out = "object_id,pixel_index,textile_type,true,pred,re\n";
  auto word = [](bool target) { return target ? "target" : "non-target"; };
  for (const auto& r : records) {
    out += csv_escape(r.object_id) + ',' + std::to_string(r.pixel_index) + ',' + csv_escape(r.group) + ',' +
           word(r.truth_target) + ',' + word(r.predicted_target) + ',' + format_double(r.error) + '\n';
  }
  return out;
}

std::vector<DetectionRecord> parse_detections_csv(std::string_view text) {
  require_utf8(text, "detections");
  const auto lines = lines_of(text);
  if (lines.empty() ||
      split_csv_line(lines.front().second) !=
          std::vector<std::string>{"object_id", "pixel_index", "textile_type", "true", "pred", "re"}) {
    fail(ErrorCode::ShapeMismatch, "detections header must be object_id,pixel_index,textile_type,true,pred,re");
  }
  auto flag = [](const std::string& s, std::size_t n) {
    if (s == "target") return true;
    if (s == "non-target") return false;
    fail(ErrorCode::ValidationError, line_ref(n) + ": '" + s + "' is neither target nor non-target");
  };
  std::vector<DetectionRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto [n, line] = lines[i];
    const auto f = split_csv_line(line);
    if (f.size() != 6) fail(ErrorCode::ShapeMismatch, line_ref(n) + ": expected 6 fields");
    out.push_back({f[0], parse_count(f[1], line_ref(n)), f[2], flag(f[3], n), flag(f[4], n), parse_double(f[5], line_ref(n))});
  }
  return out;
}

}  // namespace fiberspec
