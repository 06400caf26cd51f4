#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fiberspec/nn/network.hpp"

namespace fiberspec::nn {

/// Free-form key/value pairs stored in the checkpoint's text block.
/// Keys may not contain whitespace or '='; values may not contain newlines.
using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  Network<float> network;
  Metadata meta;
};

// Layout:
//   "FSPEC1\n"
//   "input <shape>\n"
//   "layer kind=... key=value ...\n"   one per layer
//   "meta <key>=<value>\n"             zero or more
//   "end\n"
//   per state tensor: "<name> <shape>\n" then raw little-endian float32
//   8-byte little-endian CRC-64/XZ of everything before it
std::string serialize_checkpoint(Network<float>& net, const Metadata& meta);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(Network<float>& net, const Metadata& meta, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t crc64(std::string_view bytes);

}  // namespace fiberspec::nn
