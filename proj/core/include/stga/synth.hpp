#pragma once

#include "stga/dataset.hpp"
#include "stga/metrics.hpp"
#include "stga/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stga {

/// Motion scripts for the capsule figure.
enum class SynthMotion {
    Default,    // limb swings, torso/arm sway, orbiting camera
    Static,     // rest pose, fixed camera
    Translate,  // rigid root translation along world x, fixed camera
};

struct SynthOptions {
    std::uint64_t seed = 0;
    int frames = 24;
    int size = 64;
    SynthMotion motion = SynthMotion::Default;
    double focal = 100.0;
    double distance = 4.0;
    double orbit_degrees = 15.0;       // azimuth sweeps [-orbit, +orbit]
    double sway = 0.3;                 // non-rigid sway amplitude, world units
    double translate_step = 0.05;      // per-frame root translation (Translate)
    double point_spacing = 0.03;
    int holdout_every = 4;             // frames k with k % every == offset are held out
    int holdout_offset = 2;
};

/// The generating figure: a 9-bone capsule rig whose surface points are
/// stored as an SH-degree-0 model (static splats with single-bone weights,
/// the sway carried by their motion polynomials).
struct SynthScene {
    SynthOptions options;
    Skeleton skeleton;
    Model points;
    std::vector<Pose> poses;
    std::vector<Camera> cameras;

    [[nodiscard]] double time(int k) const { return frame_time(k, options.frames); }
};

/// Throws ArgumentError for fewer than 2 frames or a non-positive size.
[[nodiscard]] SynthScene make_scene(const SynthOptions& options);

/// Frame k rendered by the brute-force oracle from the generating points.
[[nodiscard]] Image render_scene_frame(const SynthScene& scene, int k);

/// Flow k -> k+1: every point is projected at both frames and its displacement
/// is splatted to the pixels it covers with a z-buffer. `depth` holds the
/// camera depth of the winning point at frame k (infinity where empty) and
/// `depth_next` that point's depth at frame k+1.
struct FlowRaster {
    FlowField flow;
    std::vector<double> depth;
    std::vector<double> depth_next;
};
[[nodiscard]] FlowRaster rasterize_flow(const SynthScene& scene, int k);

/// Complete dataset (images, cameras, poses, skeleton, flow, holdout list).
[[nodiscard]] FrameDataset generate(const SynthOptions& options);

/// Mean PSNR/SSIM of the model rendered at the given frames.
/// Throws ArgumentError for an empty list, DataError for a missing frame.
[[nodiscard]] Metrics eval_holdout(const Model& model, const FrameDataset& data, std::span<const int> frames,
                                   const Vec3& background = Vec3::Zero());

}  // namespace stga
