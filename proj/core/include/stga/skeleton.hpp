#pragma once

#include "stga/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stga {

struct Bone {
    std::string name;
    int parent = -1;
    Mat4 rest = Mat4::Identity();  // rigid, in the parent frame
    std::optional<Vec3> tail;      // segment end in the bone's own frame
};

/// Topologically sorted bone hierarchy.
class Skeleton {
public:
    Skeleton() = default;
    /// Validates ordering and rigidity; throws ArgumentError.
    explicit Skeleton(std::vector<Bone> bones);

    [[nodiscard]] std::size_t size() const { return bones_.size(); }
    [[nodiscard]] bool empty() const { return bones_.empty(); }
    [[nodiscard]] const std::vector<Bone>& bones() const { return bones_; }
    [[nodiscard]] const Bone& bone(std::size_t i) const { return bones_[i]; }

    /// Rest pose bone-to-world transforms.
    [[nodiscard]] const std::vector<Mat4>& rest_world() const { return rest_world_; }

    /// Rest-pose segment [head, tail] of every bone in world coordinates.
    [[nodiscard]] std::vector<std::pair<Vec3, Vec3>> segments() const;

private:
    std::vector<Bone> bones_;
    std::vector<Mat4> rest_world_;
};

/// Per-bone local rotations plus a root translation.
struct Pose {
    std::vector<Quat> rotations;
    Vec3 root_translation = Vec3::Zero();

    static Pose rest(std::size_t bone_count);
};

/// Sparse skinning weights of one point: up to four bones.
struct BoneWeights {
    static constexpr int kMaxBones = 4;
    std::array<std::int32_t, kMaxBones> bones{};
    std::array<double, kMaxBones> weights{};
    int count = 0;

    /// Bone with the largest weight (lowest index on ties).
    [[nodiscard]] int dominant() const;
    static BoneWeights single(int bone);
};

using SkinningWeights = std::vector<BoneWeights>;

/// Transforms taking canonical-space points to posed space, one per bone.
using BoneTransforms = std::vector<Mat4>;

[[nodiscard]] BoneTransforms forward_kinematics(const Skeleton& skel, const Pose& pose);

/// Sum_b w_b (B_b x).
[[nodiscard]] Vec3 lbs_transform(const Vec3& x, const BoneWeights& w, const BoneTransforms& transforms);

/// d(lbs_transform)/dx = Sum_b w_b R_b.
[[nodiscard]] Mat3 lbs_jacobian(const BoneWeights& w, const BoneTransforms& transforms);

/// Gradient of a scalar loss w.r.t. the top 3x4 block of each weighted bone
/// transform, given dL/dX_L.
[[nodiscard]] std::vector<std::pair<int, Eigen::Matrix<double, 3, 4>>> lbs_bone_gradients(
    const Vec3& x, const BoneWeights& w, const Vec3& upstream);

/// Soft distance-based weights over the k nearest rest-pose bone segments.
[[nodiscard]] SkinningWeights assign_skinning_weights(std::span<const Vec3> positions,
                                                      const Skeleton& skel, int k = 4,
                                                      double sharpness = 50.0);

[[nodiscard]] double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

// JSON schema: {"bones":[{"name":str,"parent":int,"rest":[16 floats row-major],"tail":[3]?}]}
[[nodiscard]] Skeleton skeleton_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json skeleton_to_json(const Skeleton& skel);

// Per frame: {"rotations":[[w,x,y,z],...],"root_translation":[x,y,z]}
[[nodiscard]] Pose pose_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json pose_to_json(const Pose& pose);

/// {"frames":[pose, ...]}
[[nodiscard]] std::vector<Pose> poses_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json poses_to_json(std::span<const Pose> poses);

}  // namespace stga
