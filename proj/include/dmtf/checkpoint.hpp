#pragma once

#include <filesystem>
#include <vector>

#include "dmtf/tensor.hpp"
#include "json.hpp"

namespace dmtf::nd {

// Checkpoint = manifest JSON + raw weights blob.
//   manifest: {"format": "dmtf.checkpoint.v1", "config": {...},
//              "tensors": [{"name", "shape", "dtype", "byte_offset"}, ...]}
//   weights:  little-endian 32-bit floats, row-major, concatenated in
//             manifest order. Round-trips are bit-exact because all persisted
//             values are kept f32-representable in memory.
void save_checkpoint(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& weights_path,
                     const std::vector<NamedParam>& tensors, const nlohmann::json& config);

nlohmann::json read_manifest(const std::filesystem::path& manifest_path);

// Loads into a prepared parameter list; names and shapes must match exactly.
// Errors name the offending tensor.
void load_checkpoint(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& weights_path, std::vector<NamedParam>& into);

}  // namespace dmtf::nd
