#pragma once

#include "stga/config.hpp"
#include "stga/dataset.hpp"
#include "stga/losses.hpp"
#include "stga/model.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

namespace stga {

/// Splats sampled on capsules of radius `init_radius` around every bone
/// segment, skinned to the nearest bones, colored by a fresh MLP (or SH).
[[nodiscard]] Model init_model(const Config& config, const Skeleton& skeleton);

struct LogRow {
    int iteration = 0;
    LossBreakdown loss;
    std::size_t splat_count = 0;
    double psnr_train = 0.0;
    double ema_rgb = 0.0;
    std::array<double, 3> ema{0.0, 0.0, 0.0};  // flow, temp, reg
};

struct DensifyStats {
    int iteration = 0;
    int frame = 0;
    std::size_t added = 0;
    std::size_t removed = 0;
    std::size_t flagged = 0;
    std::size_t triggered_cells = 0;
};

struct TrainResult {
    Model model;
    std::vector<LogRow> log;
    std::vector<DensifyStats> densify;
    std::int64_t skipped_updates = 0;
};

struct TrainHooks {
    std::function<void(const LogRow&)> on_log;
};

/// Runs config.train.iterations steps. Validates the dataset first
/// (DataError); throws NumericError after 10 consecutive non-finite losses.
[[nodiscard]] TrainResult train(const FrameDataset& data, const Config& config, const TrainHooks& hooks = {});

/// Same, continuing from `model`.
[[nodiscard]] TrainResult train(const FrameDataset& data, const Config& config, Model model,
                                const TrainHooks& hooks = {});

/// iteration,rgb,flow,temp,reg,lambda1,lambda2,lambda3,total,splat_count,psnr_train
void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows);

/// Pixels whose accumulated flow over the window ending at frame k exceeds
/// delta, and the corresponding motion strength.
struct MotionMaps {
    Mask valid;
    std::vector<double> strength;
};
[[nodiscard]] MotionMaps motion_maps(const FrameDataset& data, int k, const DensifyConfig& cfg);

/// Density report of the model's visible splats at frame k.
[[nodiscard]] DensityReport model_density(const Model& model, const FrameDataset& data, int k,
                                          const DensifyConfig& cfg, const Vec3& background = Vec3::Zero());

/// Mean coverage_density_ratio over training frames: every projected splat
/// center counts, coverage is rendered alpha >= 0.5, the moving side is the
/// valid region. Frames where the ratio is undefined are skipped.
[[nodiscard]] double mean_density_ratio(const Model& model, const FrameDataset& data, const DensifyConfig& cfg,
                                        const Vec3& background = Vec3::Zero());

/// Accumulated splat weight above which a splat counts as visible.
inline constexpr double kVisibleWeight = 0.1;

}  // namespace stga
