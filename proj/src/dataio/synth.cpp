#include "fiberspec/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <tuple>

#include "fiberspec/error.hpp"

namespace fiberspec {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    auto part = trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!part.empty()) out.push_back(std::move(part));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double number(const KeyValue& kv, std::string_view text) {
  try {
    return parse_double(text, kv.key);
  } catch (const Error&) {
    fail(ErrorCode::SpecInvalid, "line " + std::to_string(kv.line) + ": " + kv.key + " needs a number");
  }
}

std::size_t count(const KeyValue& kv) {
  const double v = number(kv, kv.value);
  if (v < 0 || v != std::floor(v)) fail(ErrorCode::SpecInvalid, "line " + std::to_string(kv.line) + ": " + kv.key + " needs a count");
  return static_cast<std::size_t>(v);
}

std::pair<double, double> range(const KeyValue& kv) {
  const auto w = words(kv.value);
  if (w.size() != 2) fail(ErrorCode::SpecInvalid, "line " + std::to_string(kv.line) + ": " + kv.key + " needs 'min max'");
  return {number(kv, w[0]), number(kv, w[1])};
}

template <class T>
T& find_or_add(std::vector<T>& items, std::string T::*key, const std::string& name) {
  for (auto& it : items) {
    if (it.*key == name) return it;
  }
  items.emplace_back();
  items.back().*key = name;
  return items.back();
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string object_label_slug(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

}  // namespace

SyntheticSpec SyntheticSpec::parse(std::string_view text) {
  std::vector<KeyValue> kvs;
  try {
    kvs = parse_key_values(text);
  } catch (const Error& e) {
    fail(ErrorCode::SpecInvalid, std::string(e.what()).substr(to_string(e.code()).size() + 2));
  }
  SyntheticSpec spec;
  for (const auto& kv : kvs) {
    const std::string& k = kv.key;
    const std::string where = "line " + std::to_string(kv.line) + ": ";
    if (k == "start_nm") spec.start_nm = number(kv, kv.value);
    else if (k == "end_nm") spec.end_nm = number(kv, kv.value);
    else if (k == "bands") spec.bands = count(kv);
    else if (k == "spectra_per_object") spec.spectra_per_object = count(kv);
    else if (k == "noise_sd") spec.noise_sd = number(kv, kv.value);
    else if (k == "min_separation") spec.min_separation = number(kv, kv.value);
    else if (k.rfind("fiber.", 0) == 0) {
      const auto dot = k.rfind('.');
      if (dot <= 6) fail(ErrorCode::SpecInvalid, where + "expected fiber.<name>.<field>");
      auto& f = find_or_add(spec.fibers, &FiberSignature::name, k.substr(6, dot - 6));
      const auto field = k.substr(dot + 1);
      if (field == "baseline") {
        f.baseline = number(kv, kv.value);
      } else if (field == "bands") {
        f.bands.clear();
        for (const auto& item : split_on(kv.value, ',')) {
          const auto parts = split_on(item, '/');
          if (parts.size() != 3) fail(ErrorCode::SpecInvalid, where + "band '" + item + "' is not center/width/depth");
          f.bands.push_back({number(kv, parts[0]), number(kv, parts[1]), number(kv, parts[2])});
        }
      } else {
        fail(ErrorCode::SpecInvalid, where + "unknown key " + k);
      }
    } else if (k.rfind("textile.", 0) == 0) {
      if (ends_with(k, ".structure")) {
        find_or_add(spec.textiles, &TextileType::label, k.substr(8, k.size() - 8 - 10)).structure = kv.value;
      } else {
        auto& t = find_or_add(spec.textiles, &TextileType::label, k.substr(8));
        t.composition.clear();
        for (const auto& w : words(kv.value)) {
          const auto colon = w.find(':');
          if (colon == std::string::npos) fail(ErrorCode::SpecInvalid, where + "component '" + w + "' is not fiber:weight");
          t.composition.emplace_back(w.substr(0, colon), number(kv, w.substr(colon + 1)));
        }
      }
    } else if (k.rfind("dataset.", 0) == 0) {
      const auto dot = k.rfind('.');
      if (dot <= 8) fail(ErrorCode::SpecInvalid, where + "expected dataset.<tag>.<field>");
      auto& d = find_or_add(spec.datasets, &DatasetDesign::tag, k.substr(8, dot - 8));
      const auto field = k.substr(dot + 1);
      if (field == "types") d.types = split_on(kv.value, ',');
      else if (field == "spectra_per_type") d.spectra_per_type = count(kv);
      else if (field == "gain") std::tie(d.gain_min, d.gain_max) = range(kv);
      else if (field == "offset") std::tie(d.offset_min, d.offset_max) = range(kv);
      else if (field == "structure_sd") d.structure_sd = number(kv, kv.value);
      else if (field == "dark_objects") d.dark_objects = count(kv);
      else fail(ErrorCode::SpecInvalid, where + "unknown key " + k);
    } else {
      fail(ErrorCode::SpecInvalid, where + "unknown key " + k);
    }
  }
  spec.validate();
  return spec;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

const FiberSignature& SyntheticSpec::fiber(std::string_view name) const {
  for (const auto& f : fibers) {
    if (f.name == name) return f;
  }
  fail(ErrorCode::SpecInvalid, "unknown fiber '" + std::string(name) + "'");
}

const TextileType& SyntheticSpec::textile(std::string_view label) const {
  for (const auto& t : textiles) {
    if (t.label == label) return t;
  }
  fail(ErrorCode::SpecInvalid, "unknown textile type '" + std::string(label) + "'");
}

const DatasetDesign& SyntheticSpec::dataset(std::string_view tag) const {
  for (const auto& d : datasets) {
    if (d.tag == tag) return d;
  }
  fail(ErrorCode::SpecInvalid, "unknown dataset '" + std::string(tag) + "'");
}

void SyntheticSpec::validate() const {
  (void)grid();  // rejects bad ranges
  if (spectra_per_object == 0) fail(ErrorCode::SpecInvalid, "spectra_per_object must be positive");
  if (!(noise_sd >= 0.0)) fail(ErrorCode::SpecInvalid, "noise_sd must be non-negative");
  if (fibers.size() < 2) fail(ErrorCode::SpecInvalid, "at least two fibers are required");
  for (const auto& f : fibers) {
    for (const auto& b : f.bands) {
      if (!(b.width_nm > 0.0)) fail(ErrorCode::SpecInvalid, "fiber " + f.name + ": band width must be positive");
    }
  }
  for (const auto& t : textiles) {
    if (t.composition.empty()) fail(ErrorCode::SpecInvalid, "textile " + t.label + " has no composition");
    double sum = 0.0;
    for (const auto& [name, w] : t.composition) {
      (void)fiber(name);
      if (!(w > 0.0)) fail(ErrorCode::SpecInvalid, "textile " + t.label + ": weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::SpecInvalid, "textile " + t.label + ": weights must sum to 1");
  }
  for (const auto& d : datasets) {
    if (d.types.empty()) fail(ErrorCode::SpecInvalid, "dataset " + d.tag + " lists no textile types");
    for (const auto& t : d.types) (void)textile(t);
    if (d.gain_min > d.gain_max || d.offset_min > d.offset_max) {
      fail(ErrorCode::SpecInvalid, "dataset " + d.tag + ": range min above max");
    }
    if (!(d.structure_sd >= 0.0)) fail(ErrorCode::SpecInvalid, "dataset " + d.tag + ": structure_sd must be non-negative");
  }
  const double sep = min_signature_separation(*this);
  if (!(sep > min_separation)) {
    fail(ErrorCode::SpecInvalid, "fiber signatures too similar: cosine distance " + std::to_string(sep) +
                                     " after SNV is not above " + std::to_string(min_separation));
  }
}

std::string composition_text(const TextileType& type) {
  std::string out;
  for (const auto& [name, w] : type.composition) {
    if (!out.empty()) out += '/';
    out += name + ':' + format_double(w);
  }
  return out;
}

std::vector<double> fiber_reflectance(const SyntheticSpec& spec, const FiberSignature& fiber,
                                      std::span<const double> width_scale) {
  const auto centers = spec.grid().centers();
  std::vector<double> r(centers.size(), fiber.baseline);
  for (std::size_t k = 0; k < fiber.bands.size(); ++k) {
    const auto& b = fiber.bands[k];
    const double w = b.width_nm * (k < width_scale.size() ? width_scale[k] : 1.0);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const double z = (centers[i] - b.center_nm) / w;
      r[i] -= b.depth * std::exp(-0.5 * z * z);
    }
  }
  return r;
}

std::vector<double> textile_reflectance(const SyntheticSpec& spec, const TextileType& type,
                                        std::span<const double> width_scale) {
  std::vector<double> mix(spec.bands, 0.0);
  for (const auto& [name, w] : type.composition) {
    const auto r = fiber_reflectance(spec, spec.fiber(name), width_scale);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += w * r[i];
  }
  return mix;
}

double min_signature_separation(const SyntheticSpec& spec) {
  std::vector<std::vector<double>> z;
  for (const auto& f : spec.fibers) z.push_back(snv(std::span<const double>(fiber_reflectance(spec, f))));
  double best = 2.0;
  for (std::size_t a = 0; a < z.size(); ++a) {
    for (std::size_t b = a + 1; b < z.size(); ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < z[a].size(); ++i) {
        dot += z[a][i] * z[b][i];
        na += z[a][i] * z[a][i];
        nb += z[b][i] * z[b][i];
      }
      best = std::min(best, 1.0 - dot / std::sqrt(na * nb));
    }
  }
  return best;
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : tag) h = (h ^ c) * 0x100000001B3ULL;
  return splitmix(splitmix(splitmix(seed ^ h) ^ a) ^ b);
}

GeneratedDataset gen_dataset(const SyntheticSpec& spec, const DatasetDesign& design, std::uint64_t seed) {
  GeneratedDataset out;
  out.tag = design.tag;
  const std::size_t per_obj = spec.spectra_per_object;

  auto emit_object = [&](const TextileType& type, const std::string& object_id, std::mt19937_64& rng, bool dark,
                         std::size_t n_spectra) {
    std::uniform_real_distribution<double> gain_d(design.gain_min, design.gain_max);
    std::uniform_real_distribution<double> offset_d(design.offset_min, design.offset_max);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double gain = gain_d(rng);
    const double offset = offset_d(rng);

    std::vector<double> widths;
    if (design.structure_sd > 0.0) {
      std::size_t n_bands = 0;
      for (const auto& [name, w] : type.composition) n_bands = std::max(n_bands, spec.fiber(name).bands.size());
      for (std::size_t k = 0; k < n_bands; ++k) widths.push_back(std::max(0.5, 1.0 + design.structure_sd * unit(rng)));
    }
    const auto mix = textile_reflectance(spec, type, widths);

    char colour[64];
    if (dark) std::snprintf(colour, sizeof colour, "black");
    else std::snprintf(colour, sizeof colour, "gain=%.3f;offset=%.3f", gain, offset);
    out.objects.push_back({object_id, type.label, composition_text(type), type.structure, colour, design.tag,
                           design.tag + ".csv", out.spectra.size()});

    for (std::size_t p = 0; p < n_spectra; ++p) {
      Spectrum s{std::vector<double>(spec.bands, 0.0), Stage::reflectance};
      if (!dark) {
        for (std::size_t i = 0; i < spec.bands; ++i) {
          double v = gain * mix[i] + offset + spec.noise_sd * unit(rng);
          if (v < 0.0 || v > 1.5) {
            ++out.clipped_values;
            v = std::clamp(v, 0.0, 1.5);
          }
          s.values[i] = v;
        }
      }
      out.spectra.push_back({object_id, type.label, std::move(s)});
    }
  };

  for (std::size_t t = 0; t < design.types.size(); ++t) {
    const auto& type = spec.textile(design.types[t]);
    const std::size_t n_objects = (design.spectra_per_type + per_obj - 1) / per_obj;
    for (std::size_t o = 0; o < n_objects; ++o) {
      std::mt19937_64 rng(substream_seed(seed, design.tag, t, o));
      char id[128];
      std::snprintf(id, sizeof id, "%s-%s-%03zu", design.tag.c_str(), object_label_slug(type.label).c_str(), o);
      // The last object is short when spectra_per_type is not a multiple.
      emit_object(type, id, rng, false, std::min(per_obj, design.spectra_per_type - o * per_obj));
    }
  }
  for (std::size_t d = 0; d < design.dark_objects; ++d) {
    const auto& type = spec.textile(design.types[d % design.types.size()]);
    std::mt19937_64 rng(substream_seed(seed, design.tag, ~std::uint64_t{0}, d));
    char id[128];
    std::snprintf(id, sizeof id, "%s-black-%03zu", design.tag.c_str(), d);
    emit_object(type, id, rng, true, per_obj);
  }
  return out;
}

}  // namespace fiberspec
