#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voxelprior/model.hpp"

namespace voxelprior {

// Layout: "VPNMDL1", u32 LE length + JSON config record (architecture and
// variant), u32 LE tensor count, then per tensor: u32 name length, name,
// u32 rank, u32 extents, f64 LE values.
std::string serialize_model(const ModelParams& params);
// Throws std::invalid_argument naming what is wrong with the bytes.
ModelParams deserialize_model(std::string_view bytes);

void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

// Digest of the serialized form.
std::string model_digest(const ModelParams& params);

std::string arch_to_json(const ArchConfig& config);
ArchConfig arch_from_json(std::string_view text);

}  // namespace voxelprior
