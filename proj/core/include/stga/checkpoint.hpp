#pragma once

#include "stga/model.hpp"

#include <filesystem>

#include <nlohmann/json.hpp>

namespace stga {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary model file plus a JSON sidecar (`<path>.json`) holding the training
/// config and provenance.
///
/// Binary layout (little-endian):
///   "STGA", u32 version, u64 splat count, i32 n_p, i32 n_q, i32 feature width,
///   u8 color mode, i32 sh degree, u32 bone count,
///   i32 x5 encoding (position/view/pose frequencies, motion width, view encoding),
///   u32 layer count, i32 x layer count (input, hidden..., 3),
///   u64 MLP parameter count,
///   per splat: f32 x parameter_count in declaration order,
///   per splat: i32 count, i32 x4 bones, f32 x4 weights,
///   f32 x MLP parameter count.
struct Checkpoint {
    Model model;
    nlohmann::json sidecar = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on a missing file, bad magic, version mismatch or truncation.
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

[[nodiscard]] inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".json";
    return p;
}

}  // namespace stga
