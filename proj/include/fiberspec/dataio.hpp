#pragma once

// File formats and dataset bookkeeping: ENVI cubes, flat spectra CSV,
// object manifests, prediction tables and stratified splits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fiberspec/evaluation.hpp"
#include "fiberspec/spectra.hpp"

namespace fiberspec {

// ENVI pair: <name>.hdr plus <name>.raw, float32 little-endian, BIL order.
void write_cube(const HyperCube& cube, const std::filesystem::path& header_path);
HyperCube read_cube(const std::filesystem::path& header_path);
std::filesystem::path cube_data_path(const std::filesystem::path& header_path);

struct LabeledSpectrum {
  std::string object_id;
  std::string label;
  Spectrum spectrum;
};

/// Header `object_id,label,c0..c{n-1}`. Values are written in shortest
/// round-trip form so read(write(x)) == x.
std::string spectra_csv(std::span<const LabeledSpectrum> rows);
void write_spectra_csv(const std::filesystem::path& path, std::span<const LabeledSpectrum> rows);
std::vector<LabeledSpectrum> parse_spectra_csv(std::string_view text, Stage stage, std::size_t bands = 400);
std::vector<LabeledSpectrum> read_spectra_csv(const std::filesystem::path& path, Stage stage, std::size_t bands = 400);

struct ManifestEntry {
  std::string object_id;
  std::string label;      // textile type
  std::string fiber;      // composition, e.g. "cotton:0.9/polyester:0.1"
  std::string structure;
  std::string color;
  std::string split;      // train, val, test, D1..D6
  std::string source;     // spectra file holding the object's rows
  std::size_t row_offset = 0;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<ManifestEntry> entries);

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  void add(ManifestEntry entry);
  const ManifestEntry* find(std::string_view object_id) const;
  const ManifestEntry& at(std::string_view object_id) const;
  std::vector<std::string> object_ids() const;

  /// Every label must be in `labels` (when non-empty).
  void validate(std::span<const std::string> labels = {}) const;

 private:
  std::vector<ManifestEntry> entries_;
};

std::string manifest_csv(const DatasetManifest& manifest);
DatasetManifest parse_manifest_csv(std::string_view text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Maps a textile type to a class of `labels`: itself when listed, otherwise
/// the listed type whose manifest fiber composition matches. Empty when none.
std::optional<int> class_of(const DatasetManifest& manifest, std::span<const std::string> labels,
                            const std::string& textile_type);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// Per class (in sorted label order): shuffle with the seed, take
/// round(n * r_val) for validation and round(n * r_test) for test, rest to
/// train. Index lists are returned sorted.
DatasetSplit stratified_split(std::span<const std::string> labels, std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                              std::uint64_t seed = 0);

/// One row per spectrum: `index,object_id,split`.
std::string split_csv(const DatasetSplit& split, std::span<const LabeledSpectrum> rows);

// Classifier output: object_id,pixel_index,true_label,pred_label,p_<label>...
std::string predictions_csv(std::span<const PixelRecord> records, std::span<const std::string> labels);
struct PredictionTable {
  std::vector<std::string> labels;
  std::vector<PixelRecord> records;
};
PredictionTable parse_predictions_csv(std::string_view text);

// Detector output: object_id,pixel_index,textile_type,true,pred,re
std::string detections_csv(std::span<const DetectionRecord> records);
std::vector<DetectionRecord> parse_detections_csv(std::string_view text);

/// `key = value` lines; '#' starts a comment. Keys keep their inner spaces.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};
std::vector<KeyValue> parse_key_values(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Splits one CSV record; double quotes protect commas.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);

}  // namespace fiberspec
