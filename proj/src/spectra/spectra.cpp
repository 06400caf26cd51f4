#include "fiberspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fiberspec/error.hpp"

namespace fiberspec {

namespace {

constexpr double kMinDenominator = 1e-12;

void require_stage_before(Stage current, Stage next, std::string_view op) {
  if (static_cast<int>(current) >= static_cast<int>(next)) {
    fail(ErrorCode::StageOrder, std::string(op) + ": input stage " +
                                    std::string(to_string(current)) + " cannot move to " +
                                    std::string(to_string(next)));
  }
}

void require_finite(std::span<const double> x, std::string_view op) {
  for (double v : x) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, std::string(op) + ": non-finite value");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// WavelengthGrid

WavelengthGrid::WavelengthGrid() : WavelengthGrid(990.0, 1700.0, 400) {}

WavelengthGrid::WavelengthGrid(double start_nm, double end_nm, std::size_t n_bands)
    : start_nm_(start_nm), end_nm_(end_nm), n_bands_(n_bands) {
  if (n_bands < 3) fail(ErrorCode::SpecInvalid, "wavelength grid needs at least 3 bands");
  if (!(start_nm < end_nm)) fail(ErrorCode::SpecInvalid, "wavelength grid start must be below end");
}

double WavelengthGrid::spacing() const noexcept {
  return (end_nm_ - start_nm_) / static_cast<double>(n_bands_ - 1);
}

double WavelengthGrid::center(std::size_t band) const {
  if (band >= n_bands_) fail(ErrorCode::IndexOutOfRange, "band " + std::to_string(band));
  if (band == n_bands_ - 1) return end_nm_;
  return start_nm_ + static_cast<double>(band) * spacing();
}

std::vector<double> WavelengthGrid::centers() const {
  std::vector<double> out(n_bands_);
  for (std::size_t i = 0; i < n_bands_; ++i) out[i] = center(i);
  return out;
}

WavelengthGrid WavelengthGrid::from_centers(std::span<const double> centers) {
  if (centers.size() < 3) fail(ErrorCode::SpecInvalid, "wavelength grid needs at least 3 bands");
  WavelengthGrid grid(centers.front(), centers.back(), centers.size());
  const double step = grid.spacing();
  for (std::size_t i = 1; i < centers.size(); ++i) {
    const double d = centers[i] - centers[i - 1];
    if (std::abs(d - step) > 1e-9 * std::max(std::abs(step), std::abs(grid.end_nm()))) {
      fail(ErrorCode::SpecInvalid, "wavelengths are not evenly spaced at band " + std::to_string(i));
    }
  }
  return grid;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::raw: return "raw";
    case Stage::reflectance: return "reflectance";
    case Stage::snv: return "snv";
    case Stage::smoothed: return "smoothed";
    case Stage::derivative: return "derivative";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// HyperCube

HyperCube::HyperCube(std::size_t lines, std::size_t samples, WavelengthGrid grid, Stage stage)
    : lines_(lines),
      samples_(samples),
      grid_(grid),
      data_(lines * samples * grid.n_bands(), 0.0),
      stage_(stage) {}

HyperCube::HyperCube(std::size_t lines, std::size_t samples, WavelengthGrid grid,
                     std::vector<double> data, Stage stage)
    : lines_(lines), samples_(samples), grid_(grid), data_(std::move(data)), stage_(stage) {
  if (data_.size() != lines * samples * grid.n_bands()) {
    fail(ErrorCode::ShapeMismatch, "cube data has " + std::to_string(data_.size()) +
                                       " values, expected " +
                                       std::to_string(lines * samples * grid.n_bands()));
  }
  require_finite(data_, "HyperCube");
}

std::span<double> HyperCube::pixel(std::size_t line, std::size_t sample) {
  return {data_.data() + (line * samples_ + sample) * bands(), bands()};
}

std::span<const double> HyperCube::pixel(std::size_t line, std::size_t sample) const {
  return {data_.data() + (line * samples_ + sample) * bands(), bands()};
}

double& HyperCube::at(std::size_t line, std::size_t sample, std::size_t band) {
  return data_[(line * samples_ + sample) * bands() + band];
}

double HyperCube::at(std::size_t line, std::size_t sample, std::size_t band) const {
  return data_[(line * samples_ + sample) * bands() + band];
}

// ---------------------------------------------------------------------------
// PipelineConfig

void PipelineConfig::validate() const {
  if (sg_window % 2 == 0) fail(ErrorCode::InvalidWindow, "sg_window must be odd");
  if (sg_window <= sg_polyorder) fail(ErrorCode::InvalidWindow, "sg_window must exceed sg_polyorder");
  if (sg_deriv > sg_polyorder) fail(ErrorCode::InvalidWindow, "sg_deriv must not exceed sg_polyorder");
  if (smooth_block < 1) fail(ErrorCode::InvalidConfig, "smooth_block must be >= 1");
}

// ---------------------------------------------------------------------------
// Calibration

CalibrationReference::CalibrationReference(const Spectrum& per_channel)
    : columns_(1), bands_(per_channel.size()), values_(per_channel.values) {}

CalibrationReference::CalibrationReference(const HyperCube& frame)
    : columns_(frame.samples()), bands_(frame.bands()), values_(frame.samples() * frame.bands(), 0.0) {
  if (frame.lines() == 0) fail(ErrorCode::ShapeMismatch, "reference frame has no lines");
  for (std::size_t s = 0; s < frame.samples(); ++s) {
    double* dst = values_.data() + s * bands_;
    for (std::size_t l = 0; l < frame.lines(); ++l) {
      const auto px = frame.pixel(l, s);
      for (std::size_t c = 0; c < bands_; ++c) dst[c] += px[c];
    }
    for (std::size_t c = 0; c < bands_; ++c) dst[c] /= static_cast<double>(frame.lines());
  }
}

std::span<const double> CalibrationReference::column(std::size_t sample) const {
  const std::size_t col = columns_ == 1 ? 0 : sample;
  return {values_.data() + col * bands_, bands_};
}

HyperCube calibrate_reflectance(const HyperCube& raw, const CalibrationReference& dark,
                                const CalibrationReference& white) {
  if (dark.bands() != raw.bands() || white.bands() != raw.bands()) {
    fail(ErrorCode::ShapeMismatch, "reference band count differs from cube band count");
  }
  for (const auto* ref : {&dark, &white}) {
    if (ref->columns() != 1 && ref->columns() != raw.samples()) {
      fail(ErrorCode::ShapeMismatch, "reference column count differs from cube samples");
    }
  }
  HyperCube out(raw.lines(), raw.samples(), raw.grid(), Stage::reflectance);
  for (std::size_t s = 0; s < raw.samples(); ++s) {
    const auto d = dark.column(s);
    const auto w = white.column(s);
    for (std::size_t c = 0; c < raw.bands(); ++c) {
      if (std::abs(w[c] - d[c]) < kMinDenominator) {
        fail(ErrorCode::ZeroDenominator, "white equals dark at column " + std::to_string(s) +
                                             ", channel " + std::to_string(c));
      }
    }
  }
  for (std::size_t l = 0; l < raw.lines(); ++l) {
    for (std::size_t s = 0; s < raw.samples(); ++s) {
      const auto d = dark.column(s);
      const auto w = white.column(s);
      const auto in = raw.pixel(l, s);
      auto dst = out.pixel(l, s);
      for (std::size_t c = 0; c < raw.bands(); ++c) dst[c] = (in[c] - d[c]) / (w[c] - d[c]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SNV

std::vector<double> snv(std::span<const double> x) {
  if (x.size() < 2) fail(ErrorCode::TooShort, "SNV needs at least 2 channels");
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  if (!(sd >= kMinDenominator)) fail(ErrorCode::ZeroVariance, "spectrum is constant");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

Spectrum snv(const Spectrum& x) {
  require_stage_before(x.stage, Stage::snv, "snv");
  return {snv(std::span<const double>(x.values)), Stage::snv};
}

// ---------------------------------------------------------------------------
// Block smoothing

std::vector<BlockSpectrum> mean_smooth(const HyperCube& cube, std::size_t block) {
  if (block < 1) fail(ErrorCode::InvalidConfig, "block must be >= 1");
  if (cube.lines() < block || cube.samples() < block) {
    fail(ErrorCode::EmptyOutput, "cube " + std::to_string(cube.lines()) + "x" +
                                     std::to_string(cube.samples()) + " smaller than block " +
                                     std::to_string(block));
  }
  require_stage_before(cube.stage(), Stage::smoothed, "mean_smooth");
  const std::size_t bl = cube.lines() / block;
  const std::size_t bs = cube.samples() / block;
  const double inv = 1.0 / static_cast<double>(block * block);
  std::vector<BlockSpectrum> out;
  out.reserve(bl * bs);
  for (std::size_t i = 0; i < bl; ++i) {
    for (std::size_t j = 0; j < bs; ++j) {
      std::vector<double> acc(cube.bands(), 0.0);
      for (std::size_t l = i * block; l < (i + 1) * block; ++l) {
        for (std::size_t s = j * block; s < (j + 1) * block; ++s) {
          const auto px = cube.pixel(l, s);
          for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += px[c];
        }
      }
      for (double& v : acc) v *= inv;
      out.push_back({i, j, Spectrum{std::move(acc), Stage::smoothed}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dark filter

DarkDecision dark_sample_filter(const Spectrum& reflectance, double threshold) {
  if (reflectance.stage != Stage::reflectance) {
    fail(ErrorCode::StageOrder, "dark filter expects reflectance, got " +
                                    std::string(to_string(reflectance.stage)));
  }
  double sum = 0.0;
  for (double v : reflectance.values) sum += v;
  const double mean = reflectance.values.empty() ? 0.0 : sum / static_cast<double>(reflectance.size());
  return {mean < threshold, mean};
}

// ---------------------------------------------------------------------------
// Pipeline

PipelineResult pipeline_apply(const HyperCube& cube, const PipelineConfig& cfg) {
  cfg.validate();
  if (cube.stage() != Stage::reflectance) {
    fail(ErrorCode::StageOrder, "pipeline expects a reflectance cube, got " +
                                    std::string(to_string(cube.stage())));
  }
  PipelineResult result;

  // Tile mean reflectance drives the dark decision, before SNV removes level.
  const auto reflectance_blocks = mean_smooth(cube, cfg.smooth_block);

  HyperCube work = cube;
  std::vector<char> bad_pixel(cube.lines() * cube.samples(), 0);
  if (cfg.apply_snv) {
    for (std::size_t l = 0; l < cube.lines(); ++l) {
      for (std::size_t s = 0; s < cube.samples(); ++s) {
        auto px = work.pixel(l, s);
        try {
          const auto z = snv(std::span<const double>(px.data(), px.size()));
          std::copy(z.begin(), z.end(), px.begin());
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ZeroVariance) throw;
          bad_pixel[l * cube.samples() + s] = 1;
          ++result.zero_variance_pixels;
        }
      }
    }
    work.set_stage(Stage::snv);
  }

  auto blocks = mean_smooth(work, cfg.smooth_block);
  const std::size_t b = cfg.smooth_block;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& blk = blocks[k];
    bool dropped = false;
    for (std::size_t l = blk.block_line * b; l < (blk.block_line + 1) * b && !dropped; ++l) {
      for (std::size_t s = blk.block_sample * b; s < (blk.block_sample + 1) * b; ++s) {
        if (bad_pixel[l * cube.samples() + s]) {
          dropped = true;
          break;
        }
      }
    }
    if (dropped) {
      ++result.dropped_blocks;
      continue;
    }
    Spectrum refl{reflectance_blocks[k].spectrum.values, Stage::reflectance};
    result.blocks.push_back({blk.block_line, blk.block_sample, savgol_apply(blk.spectrum, cfg),
                             dark_sample_filter(refl, cfg.dark_threshold)});
  }
  return result;
}

Spectrum preprocess_spectrum(const Spectrum& reflectance, const PipelineConfig& cfg) {
  cfg.validate();
  Spectrum s = cfg.apply_snv ? snv(reflectance) : reflectance;
  return savgol_apply(s, cfg);
}

}  // namespace fiberspec
