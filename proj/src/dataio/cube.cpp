#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>

#include "fiberspec/dataio.hpp"
#include "fiberspec/error.hpp"

namespace fiberspec {

static_assert(std::endian::native == std::endian::little, "cube I/O assumes a little-endian host");

namespace {

Stage stage_from_string(std::string_view s) {
  for (auto st : {Stage::raw, Stage::reflectance, Stage::snv, Stage::smoothed, Stage::derivative}) {
    if (to_string(st) == s) return st;
  }
  fail(ErrorCode::HeaderMismatch, "unknown stage '" + std::string(s) + "'");
}

std::size_t header_size(const std::map<std::string, std::string>& h, const std::string& key) {
  const auto it = h.find(key);
  if (it == h.end()) fail(ErrorCode::HeaderMismatch, "header lacks '" + key + "'");
  const double v = parse_double(it->second, key);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    fail(ErrorCode::HeaderMismatch, "header '" + key + "' is not a count");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::filesystem::path cube_data_path(const std::filesystem::path& header_path) {
  auto p = header_path;
  p.replace_extension(".raw");
  return p;
}

void write_cube(const HyperCube& cube, const std::filesystem::path& header_path) {
  std::string h = "ENVI\n";
  h += "description = {fiberspec cube}\n";
  h += "samples = " + std::to_string(cube.samples()) + "\n";
  h += "lines = " + std::to_string(cube.lines()) + "\n";
  h += "bands = " + std::to_string(cube.bands()) + "\n";
  h += "header offset = 0\n";
  h += "file type = ENVI Standard\n";
  h += "data type = 4\n";
  h += "interleave = bil\n";
  h += "byte order = 0\n";
  h += "fiberspec stage = " + std::string(to_string(cube.stage())) + "\n";
  h += "wavelength units = Nanometers\n";
  h += "wavelength = {";
  const auto centers = cube.grid().centers();
  for (std::size_t b = 0; b < centers.size(); ++b) {
    if (b) h += ", ";
    h += format_double(centers[b]);
  }
  h += "}\n";
  write_text_file(header_path, h);

  const std::size_t L = cube.lines(), S = cube.samples(), B = cube.bands();
  std::vector<float> payload(L * S * B);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) payload[(l * B + b) * S + s] = static_cast<float>(cube.at(l, s, b));
    }
  }
  const auto data_path = cube_data_path(header_path);
  std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + data_path.string());
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  if (!out) fail(ErrorCode::IoError, "short write to " + data_path.string());
}

HyperCube read_cube(const std::filesystem::path& header_path) {
  const std::string text = read_text_file(header_path);
  if (text.rfind("ENVI", 0) != 0) fail(ErrorCode::HeaderMismatch, header_path.string() + " is not an ENVI header");

  // Values in braces may span lines; join them before splitting on '='.
  std::map<std::string, std::string> h;
  std::size_t pos = text.find('\n');
  while (pos != std::string::npos && pos < text.size()) {
    const auto eol = text.find('\n', pos + 1);
    std::string line = text.substr(pos + 1, eol == std::string::npos ? std::string::npos : eol - pos - 1);
    pos = eol;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    if (value.find('{') != std::string::npos) {
      while (value.find('}') == std::string::npos && pos != std::string::npos) {
        const auto next = text.find('\n', pos + 1);
        value += ' ' + text.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
        pos = next;
      }
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    key = strip(key);
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    h[key] = strip(value);
  }

  const std::size_t S = header_size(h, "samples"), L = header_size(h, "lines"), B = header_size(h, "bands");
  if (header_size(h, "data type") != 4) fail(ErrorCode::HeaderMismatch, "only data type 4 (float32) is supported");
  if (h.count("interleave") && h["interleave"] != "bil" && h["interleave"] != "BIL") {
    fail(ErrorCode::HeaderMismatch, "interleave '" + h["interleave"] + "' is not bil");
  }
  if (h.count("byte order") && header_size(h, "byte order") != 0) {
    fail(ErrorCode::HeaderMismatch, "big-endian payloads are not supported");
  }
  const std::size_t offset = h.count("header offset") ? header_size(h, "header offset") : 0;

  WavelengthGrid grid;
  if (h.count("wavelength")) {
    std::string w = h["wavelength"];
    if (w.size() < 2 || w.front() != '{' || w.back() != '}') fail(ErrorCode::HeaderMismatch, "bad wavelength list");
    const auto parts = split_csv_line(w.substr(1, w.size() - 2));
    std::vector<double> centers;
    for (const auto& p : parts) centers.push_back(parse_double(p, "wavelength"));
    if (centers.size() != B) {
      fail(ErrorCode::HeaderMismatch, "header lists " + std::to_string(centers.size()) + " wavelengths for " +
                                          std::to_string(B) + " bands");
    }
    grid = WavelengthGrid::from_centers(centers);
  } else {
    grid = WavelengthGrid(990.0, 1700.0, B);
  }
  const Stage stage = h.count("fiberspec stage") ? stage_from_string(h["fiberspec stage"]) : Stage::raw;

  const auto data_path = cube_data_path(header_path);
  std::ifstream in(data_path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorCode::IoError, "cannot open " + data_path.string());
  const auto file_size = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = offset + L * S * B * 4;
  if (file_size < expected) {
    fail(ErrorCode::TruncatedPayload, data_path.string() + " holds " + std::to_string(file_size) + " bytes, header needs " +
                                          std::to_string(expected));
  }
  if (file_size > expected) {
    fail(ErrorCode::HeaderMismatch, data_path.string() + " holds " + std::to_string(file_size) +
                                        " bytes, more than the header's " + std::to_string(expected));
  }
  std::vector<float> payload(L * S * B);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  if (!in) fail(ErrorCode::TruncatedPayload, "short read from " + data_path.string());

  HyperCube cube(L, S, grid, stage);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) cube.at(l, s, b) = payload[(l * B + b) * S + s];
    }
  }
  return cube;
}

}  // namespace fiberspec
