#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dualfocus/dfnet.hpp"
#include "dualfocus/io.hpp"

namespace dualfocus::checkpoint {

/// Container layout:
///   8 bytes  magic "DC2CKPT1"
///   8 bytes  little-endian length L of the JSON header
///   L bytes  JSON {config, extra, tensors: [{name, shape, offset}]}
///   float32 little-endian tensor payload, offsets counted in floats
inline constexpr char kMagic[] = "DC2CKPT1";

io::Bytes serialize(dfnet::DetailFusionNet& model, const nlohmann::json& extra = nlohmann::json::object());

struct Loaded {
  dfnet::DetailFusionNet model{nullptr};
  nlohmann::json extra;
  /// SHA-256 of the serialized container.
  std::string id;
};

Loaded deserialize(std::span<const std::uint8_t> bytes);

/// Writes atomically and returns the checkpoint id.
std::string save(const std::filesystem::path& path, dfnet::DetailFusionNet& model,
                 const nlohmann::json& extra = nlohmann::json::object());
Loaded load(const std::filesystem::path& path);

/// True when both models hold the same configuration and bit-identical tensors.
bool same_weights(dfnet::DetailFusionNet& a, dfnet::DetailFusionNet& b);

}  // namespace dualfocus::checkpoint
