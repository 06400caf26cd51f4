#pragma once

// Calibration and chemometrics preprocessing of NIR reflectance spectra.
//
// The processing chain is fixed: dark/white calibration, per-pixel SNV,
// non-overlapping block averaging, Savitzky-Golay derivative. All arithmetic
// is double precision and every reduction runs in a fixed left-to-right order
// so results do not depend on how pixels are scheduled.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace fiberspec {

/// Linearly spaced band centers, endpoints inclusive.
class WavelengthGrid {
 public:
  WavelengthGrid();  // 990-1700 nm, 400 bands
  WavelengthGrid(double start_nm, double end_nm, std::size_t n_bands);

  double start_nm() const noexcept { return start_nm_; }
  double end_nm() const noexcept { return end_nm_; }
  std::size_t n_bands() const noexcept { return n_bands_; }
  double spacing() const noexcept;
  double center(std::size_t band) const;
  std::vector<double> centers() const;

  /// Rebuilds a grid from an explicit list of centers; rejects uneven spacing.
  static WavelengthGrid from_centers(std::span<const double> centers);

  friend bool operator==(const WavelengthGrid&, const WavelengthGrid&) = default;

 private:
  double start_nm_;
  double end_nm_;
  std::size_t n_bands_;
};

enum class Stage { raw, reflectance, snv, smoothed, derivative };

std::string_view to_string(Stage stage);

struct Spectrum {
  std::vector<double> values;
  Stage stage = Stage::raw;

  std::size_t size() const noexcept { return values.size(); }
};

/// lines x samples x bands volume, stored pixel-major so each pixel's
/// spectrum is contiguous.
class HyperCube {
 public:
  HyperCube() = default;
  HyperCube(std::size_t lines, std::size_t samples, WavelengthGrid grid,
            Stage stage = Stage::raw);
  HyperCube(std::size_t lines, std::size_t samples, WavelengthGrid grid,
            std::vector<double> data, Stage stage = Stage::raw);

  std::size_t lines() const noexcept { return lines_; }
  std::size_t samples() const noexcept { return samples_; }
  std::size_t bands() const noexcept { return grid_.n_bands(); }
  const WavelengthGrid& grid() const noexcept { return grid_; }
  Stage stage() const noexcept { return stage_; }
  void set_stage(Stage stage) noexcept { stage_ = stage; }

  std::span<double> pixel(std::size_t line, std::size_t sample);
  std::span<const double> pixel(std::size_t line, std::size_t sample) const;
  double& at(std::size_t line, std::size_t sample, std::size_t band);
  double at(std::size_t line, std::size_t sample, std::size_t band) const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

 private:
  std::size_t lines_ = 0;
  std::size_t samples_ = 0;
  WavelengthGrid grid_;
  std::vector<double> data_;
  Stage stage_ = Stage::raw;
};

struct PipelineConfig {
  bool apply_snv = true;
  std::size_t smooth_block = 5;
  std::size_t sg_window = 9;
  std::size_t sg_polyorder = 2;
  std::size_t sg_deriv = 1;
  double dark_threshold = 0.05;

  void validate() const;
};

/// Dark or white reference. Either one spectrum broadcast to every column,
/// or one spectrum per cross-track column (pushbroom frame averaged over lines).
class CalibrationReference {
 public:
  explicit CalibrationReference(const Spectrum& per_channel);
  explicit CalibrationReference(const HyperCube& frame);

  std::size_t columns() const noexcept { return columns_; }
  std::size_t bands() const noexcept { return bands_; }
  std::span<const double> column(std::size_t sample) const;

 private:
  std::size_t columns_ = 1;
  std::size_t bands_ = 0;
  std::vector<double> values_;
};

HyperCube calibrate_reflectance(const HyperCube& raw, const CalibrationReference& dark,
                                const CalibrationReference& white);

/// Standard normal variate with the sample (n-1) standard deviation.
std::vector<double> snv(std::span<const double> x);
Spectrum snv(const Spectrum& x);

struct BlockSpectrum {
  std::size_t block_line = 0;
  std::size_t block_sample = 0;
  Spectrum spectrum;
};

/// Channel-wise mean over non-overlapping block x block tiles anchored at the
/// top-left. Partial tiles on the right and bottom edges are dropped.
std::vector<BlockSpectrum> mean_smooth(const HyperCube& cube, std::size_t block);

/// Weights that evaluate the deriv-th derivative, at offset `position` from the
/// window center, of the least-squares polynomial fit over the window.
std::vector<double> savgol_weights(std::size_t window, std::size_t polyorder,
                                   std::size_t deriv, double position);

/// Central convolution weights (position 0).
std::vector<double> savgol_coefficients(std::size_t window, std::size_t polyorder,
                                        std::size_t deriv);

/// Length-preserving Savitzky-Golay filter. Edge channels are evaluated from
/// the first/last full window's polynomial fit.
std::vector<double> savgol_filter(std::span<const double> x, std::size_t window,
                                  std::size_t polyorder, std::size_t deriv);
Spectrum savgol_apply(const Spectrum& x, const PipelineConfig& cfg);

struct DarkDecision {
  bool exclude = false;
  double mean_reflectance = 0.0;
};

/// Excludes spectra whose mean reflectance is strictly below threshold.
DarkDecision dark_sample_filter(const Spectrum& reflectance, double threshold);

struct ProcessedBlock {
  std::size_t block_line = 0;
  std::size_t block_sample = 0;
  Spectrum spectrum;
  DarkDecision dark;  // evaluated on the tile's mean reflectance
};

struct PipelineResult {
  std::vector<ProcessedBlock> blocks;
  std::size_t zero_variance_pixels = 0;
  std::size_t dropped_blocks = 0;
};

/// SNV per pixel, then block means, then SG per block. Blocks containing a
/// constant (zero-variance) pixel are dropped and counted.
PipelineResult pipeline_apply(const HyperCube& cube, const PipelineConfig& cfg);

/// SNV and SG on an already block-averaged spectrum (flat spectra files).
Spectrum preprocess_spectrum(const Spectrum& reflectance, const PipelineConfig& cfg);

}  // namespace fiberspec
