#pragma once

#include "stga/camera.hpp"
#include "stga/flowdens.hpp"
#include "stga/image.hpp"
#include "stga/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stga {

inline constexpr int kDatasetVersion = 1;

/// A monocular sequence on disk:
///   frames/%04d.png, frames_raw/%04d.imgf, cameras.json, poses.json,
///   skeleton.json, flow/%04d.flo (k -> k+1, N-1 files), meta.json.
struct FrameDataset {
    Skeleton skeleton;
    std::vector<Camera> cameras;
    std::vector<Pose> poses;
    std::vector<Image> frames;      // float RGB, from frames_raw
    std::vector<FlowField> flows;   // flows[k]: frame k -> k+1
    std::vector<int> holdout;       // frame indices excluded from training
    std::uint64_t seed = 0;

    [[nodiscard]] int frame_count() const { return static_cast<int>(frames.size()); }
    [[nodiscard]] int height() const { return frames.empty() ? 0 : frames.front().height; }
    [[nodiscard]] int width() const { return frames.empty() ? 0 : frames.front().width; }
    [[nodiscard]] double time(int k) const;
    [[nodiscard]] bool is_holdout(int k) const;
    [[nodiscard]] std::vector<int> training_frames() const;

    /// Throws DataError describing the first inconsistency (counts, shapes,
    /// bone counts, holdout range).
    void validate() const;
};

/// Writes every file of the layout; throws DataError with the failing path.
void save_dataset(const std::filesystem::path& dir, const FrameDataset& data);
/// Reads and validates; throws DataError with the failing path.
[[nodiscard]] FrameDataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a over the dataset's files in a fixed order, as hex.
[[nodiscard]] std::string dataset_hash(const std::filesystem::path& dir);

}  // namespace stga
