#pragma once

// Synthetic NIR reflectance generator. Each fiber is a baseline minus
// Gaussian absorption bands; textile types mix fibers linearly; every object
// is a run of spectra sharing one gain/offset draw (its "colour").

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fiberspec/dataio.hpp"

namespace fiberspec {

struct AbsorptionBand {
  double center_nm = 0.0;
  double width_nm = 0.0;  // Gaussian sigma
  double depth = 0.0;
};

struct FiberSignature {
  std::string name;
  double baseline = 0.8;
  std::vector<AbsorptionBand> bands;
};

struct TextileType {
  std::string label;
  std::vector<std::pair<std::string, double>> composition;  // fiber, weight
  std::string structure = "woven";
};

struct DatasetDesign {
  std::string tag;
  std::vector<std::string> types;
  std::size_t spectra_per_type = 100;
  double gain_min = 0.7;
  double gain_max = 1.3;
  double offset_min = -0.1;
  double offset_max = 0.1;
  double structure_sd = 0.0;  // relative sd of per-object band width warps
  std::size_t dark_objects = 0;
};

struct SyntheticSpec {
  double start_nm = 990.0;
  double end_nm = 1700.0;
  std::size_t bands = 400;
  std::size_t spectra_per_object = 25;
  double noise_sd = 0.01;
  double min_separation = 0.05;
  std::vector<FiberSignature> fibers;
  std::vector<TextileType> textiles;
  std::vector<DatasetDesign> datasets;

  /// Flat `key = value` text. Unknown keys raise SpecInvalid.
  static SyntheticSpec parse(std::string_view text);
  static SyntheticSpec load(const std::filesystem::path& path);

  /// Weights convex, references resolved, fiber signatures pairwise separated.
  void validate() const;

  WavelengthGrid grid() const { return {start_nm, end_nm, bands}; }
  const FiberSignature& fiber(std::string_view name) const;
  const TextileType& textile(std::string_view label) const;
  const DatasetDesign& dataset(std::string_view tag) const;
};

/// "cotton:0.9/polyester:0.1"
std::string composition_text(const TextileType& type);

/// Noise-free reflectance of one fiber; `width_scale` multiplies each band's width.
std::vector<double> fiber_reflectance(const SyntheticSpec& spec, const FiberSignature& fiber,
                                      std::span<const double> width_scale = {});

/// Linear mix of the constituent fibers.
std::vector<double> textile_reflectance(const SyntheticSpec& spec, const TextileType& type,
                                        std::span<const double> width_scale = {});

/// Smallest pairwise cosine distance between SNV-transformed fiber signatures.
double min_signature_separation(const SyntheticSpec& spec);

struct GeneratedDataset {
  std::string tag;
  std::vector<LabeledSpectrum> spectra;  // reflectance stage
  std::vector<ManifestEntry> objects;
  std::size_t clipped_values = 0;
};

/// Spectra for one dataset design. Every object draws from its own
/// substream of `seed`, so output does not depend on generation order.
GeneratedDataset gen_dataset(const SyntheticSpec& spec, const DatasetDesign& design, std::uint64_t seed);

/// 64-bit mix of a seed with stream coordinates.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b);

}  // namespace fiberspec
