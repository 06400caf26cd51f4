#include "fiberspec/nn/checkpoint.hpp"

#include <bit>
#include <boost/crc.hpp>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "FSPEC1\n";

std::string layer_param_name(std::size_t layer, const std::string& name) {
  return "layer" + std::to_string(layer) + "." + name;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string_view::npos) fail(ErrorCode::TruncatedPayload, "checkpoint ends inside a text line");
    const auto out = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::TruncatedPayload, "checkpoint tensor payload is truncated");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

std::uint64_t crc64(std::string_view bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, 0xFFFFFFFFFFFFFFFFULL, 0xFFFFFFFFFFFFFFFFULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::string serialize_checkpoint(Network<float>& net, const Metadata& meta) {
  std::string out(kMagic);
  out += "input " + shape_to_string(net.input_shape()) + "\n";
  for (const auto& spec : net.specs()) out += "layer " + spec.to_line() + "\n";
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of(" \t\n=") != std::string::npos) {
      fail(ErrorCode::ValidationError, "bad checkpoint metadata key '" + k + "'");
    }
    if (v.find('\n') != std::string::npos) fail(ErrorCode::ValidationError, "metadata value for " + k + " has a newline");
    out += "meta " + k + "=" + v + "\n";
  }
  out += "end\n";
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    for (auto* p : net.layer(i).params()) {
      out += layer_param_name(i, p->name) + " " + shape_to_string(p->value.shape()) + "\n";
      const auto n = p->value.size() * sizeof(float);
      const auto at = out.size();
      out.resize(at + n);
      std::memcpy(out.data() + at, p->value.raw(), n);
    }
  }
  const std::uint64_t crc = crc64(out);
  char tail[8];
  std::memcpy(tail, &crc, 8);
  out.append(tail, 8);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    fail(ErrorCode::HeaderMismatch, "not an FSPEC1 checkpoint");
  }
  const std::string_view payload(bytes.data(), bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + payload.size(), 8);
  if (stored != crc64(payload)) fail(ErrorCode::ChecksumMismatch, "checkpoint CRC-64 does not match payload");

  Reader r(payload);
  r.line();
  const auto input = r.line();
  if (!starts_with(input, "input ")) fail(ErrorCode::HeaderMismatch, "checkpoint lacks input shape line");
  Shape input_shape = parse_shape(input.substr(6));

  std::vector<LayerSpec> specs;
  Metadata meta;
  for (;;) {
    const auto l = r.line();
    if (l == "end") break;
    if (starts_with(l, "layer ")) {
      specs.push_back(LayerSpec::parse_line(l.substr(6)));
    } else if (starts_with(l, "meta ")) {
      const auto kv = l.substr(5);
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) fail(ErrorCode::HeaderMismatch, "bad metadata line");
      meta[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
    } else {
      fail(ErrorCode::HeaderMismatch, "unexpected checkpoint line: " + std::string(l));
    }
  }

  Network<float> net(input_shape, specs);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    for (auto* p : net.layer(i).params()) {
      const auto header = r.line();
      const auto sp = header.find(' ');
      const std::string expected = layer_param_name(i, p->name);
      if (sp == std::string_view::npos || header.substr(0, sp) != expected) {
        fail(ErrorCode::HeaderMismatch, "expected tensor " + expected + ", found '" + std::string(header) + "'");
      }
      if (parse_shape(header.substr(sp + 1)) != p->value.shape()) {
        fail(ErrorCode::ShapeMismatch, "tensor " + expected + " has shape " + std::string(header.substr(sp + 1)));
      }
      const auto raw = r.take(p->value.size() * sizeof(float));
      std::memcpy(p->value.raw(), raw.data(), raw.size());
    }
  }
  if (!r.done()) fail(ErrorCode::HeaderMismatch, "trailing bytes after checkpoint tensors");
  return {std::move(net), std::move(meta)};
}

void save_checkpoint(Network<float>& net, const Metadata& meta, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace fiberspec::nn
