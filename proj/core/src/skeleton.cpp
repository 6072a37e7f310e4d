#include "stga/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace stga {

Skeleton::Skeleton(std::vector<Bone> bones) : bones_(std::move(bones)) {
    rest_world_.reserve(bones_.size());
    for (std::size_t i = 0; i < bones_.size(); ++i) {
        const Bone& b = bones_[i];
        if (b.parent >= static_cast<int>(i) || b.parent < -1) {
            throw ArgumentError("skeleton: bone '" + b.name + "' has parent index " +
                                std::to_string(b.parent) + " not before its own index " +
                                std::to_string(i));
        }
        if (!is_rigid(b.rest)) {
            throw ArgumentError("skeleton: rest transform of bone '" + b.name + "' is not rigid");
        }
        rest_world_.push_back(b.parent < 0 ? b.rest : Mat4(rest_world_[b.parent] * b.rest));
    }
}

std::vector<std::pair<Vec3, Vec3>> Skeleton::segments() const {
    std::vector<std::pair<Vec3, Vec3>> segs(bones_.size());
    std::vector<Vec3> child_sum(bones_.size(), Vec3::Zero());
    std::vector<int> child_count(bones_.size(), 0);
    for (std::size_t i = 0; i < bones_.size(); ++i) {
        if (bones_[i].parent >= 0) {
            child_sum[bones_[i].parent] += rest_world_[i].block<3, 1>(0, 3);
            ++child_count[bones_[i].parent];
        }
    }
    for (std::size_t i = 0; i < bones_.size(); ++i) {
        const Vec3 head = rest_world_[i].block<3, 1>(0, 3);
        Vec3 tail = head;
        if (bones_[i].tail) {
            tail = transform_point(rest_world_[i], *bones_[i].tail);
        } else if (child_count[i] > 0) {
            tail = child_sum[i] / child_count[i];
        } else if (bones_[i].parent >= 0) {
            tail = head + (head - rest_world_[bones_[i].parent].block<3, 1>(0, 3));
        }
        segs[i] = {head, tail};
    }
    return segs;
}

Pose Pose::rest(std::size_t bone_count) {
    Pose p;
    p.rotations.assign(bone_count, identity_quat());
    return p;
}

int BoneWeights::dominant() const {
    int best = count > 0 ? bones[0] : 0;
    double best_w = count > 0 ? weights[0] : 0.0;
    for (int i = 1; i < count; ++i) {
        if (weights[i] > best_w || (weights[i] == best_w && bones[i] < best)) {
            best = bones[i];
            best_w = weights[i];
        }
    }
    return best;
}

BoneWeights BoneWeights::single(int bone) {
    BoneWeights w;
    w.bones[0] = bone;
    w.weights[0] = 1.0;
    w.count = 1;
    return w;
}

BoneTransforms forward_kinematics(const Skeleton& skel, const Pose& pose) {
    if (pose.rotations.size() != skel.size()) {
        throw ArgumentError("forward_kinematics: pose has " + std::to_string(pose.rotations.size()) +
                            " rotations for " + std::to_string(skel.size()) + " bones");
    }
    std::vector<Mat4> world(skel.size());
    BoneTransforms out(skel.size());
    for (std::size_t i = 0; i < skel.size(); ++i) {
        const Bone& b = skel.bone(i);
        const Mat4 local = b.rest * rigid(quat_to_matrix(pose.rotations[i]), Vec3::Zero());
        world[i] = b.parent < 0 ? Mat4(translation(pose.root_translation) * local)
                                : Mat4(world[b.parent] * local);
        out[i] = world[i] * rigid_inverse(skel.rest_world()[i]);
    }
    return out;
}

Vec3 lbs_transform(const Vec3& x, const BoneWeights& w, const BoneTransforms& transforms) {
    Vec3 out = Vec3::Zero();
    for (int i = 0; i < w.count; ++i) {
        out += w.weights[i] * transform_point(transforms[w.bones[i]], x);
    }
    return out;
}

Mat3 lbs_jacobian(const BoneWeights& w, const BoneTransforms& transforms) {
    Mat3 j = Mat3::Zero();
    for (int i = 0; i < w.count; ++i) j += w.weights[i] * transforms[w.bones[i]].block<3, 3>(0, 0);
    return j;
}

std::vector<std::pair<int, Eigen::Matrix<double, 3, 4>>> lbs_bone_gradients(const Vec3& x,
                                                                            const BoneWeights& w,
                                                                            const Vec3& upstream) {
    std::vector<std::pair<int, Eigen::Matrix<double, 3, 4>>> out;
    const Eigen::RowVector4d xh(x[0], x[1], x[2], 1.0);
    for (int i = 0; i < w.count; ++i) {
        out.emplace_back(w.bones[i], w.weights[i] * upstream * xh);
    }
    return out;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + s * ab)).norm();
}

SkinningWeights assign_skinning_weights(std::span<const Vec3> positions, const Skeleton& skel,
                                        int k, double sharpness) {
    if (skel.empty()) throw ArgumentError("assign_skinning_weights: empty skeleton");
    if (k < 1) throw ArgumentError("assign_skinning_weights: k must be >= 1");
    const auto segs = skel.segments();
    const int keep = std::min({k, BoneWeights::kMaxBones, static_cast<int>(skel.size())});

    SkinningWeights out(positions.size());
    std::vector<std::pair<double, int>> dist(skel.size());
    for (std::size_t p = 0; p < positions.size(); ++p) {
        for (std::size_t b = 0; b < segs.size(); ++b) {
            const double d = point_segment_distance(positions[p], segs[b].first, segs[b].second);
            dist[b] = {d * d, static_cast<int>(b)};
        }
        std::partial_sort(dist.begin(), dist.begin() + keep, dist.end());
        BoneWeights& w = out[p];
        w.count = keep;
        double total = 0.0;
        const double nearest = dist[0].first;
        for (int i = 0; i < keep; ++i) {
            w.bones[i] = dist[i].second;
            w.weights[i] = std::exp(-sharpness * (dist[i].first - nearest));
            total += w.weights[i];
        }
        for (int i = 0; i < keep; ++i) w.weights[i] /= total;
    }
    return out;
}

namespace {

Mat4 mat4_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 16) throw DataError("expected 16 numbers for a 4x4 matrix");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = j.at(r * 4 + c).get<double>();
    }
    return m;
}

nlohmann::json mat4_to_json(const Mat4& m) {
    nlohmann::json j = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) j.push_back(m(r, c));
    }
    return j;
}

Vec3 vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("expected 3 numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

Skeleton skeleton_from_json(const nlohmann::json& j) {
    std::vector<Bone> bones;
    for (const auto& jb : j.at("bones")) {
        Bone b;
        b.name = jb.at("name").get<std::string>();
        b.parent = jb.at("parent").get<int>();
        b.rest = mat4_from_json(jb.at("rest"));
        if (jb.contains("tail")) b.tail = vec3_from_json(jb.at("tail"));
        bones.push_back(std::move(b));
    }
    return Skeleton(std::move(bones));
}

nlohmann::json skeleton_to_json(const Skeleton& skel) {
    nlohmann::json bones = nlohmann::json::array();
    for (const Bone& b : skel.bones()) {
        nlohmann::json jb = {{"name", b.name}, {"parent", b.parent}, {"rest", mat4_to_json(b.rest)}};
        if (b.tail) jb["tail"] = {b.tail->x(), b.tail->y(), b.tail->z()};
        bones.push_back(std::move(jb));
    }
    return {{"bones", bones}};
}

Pose pose_from_json(const nlohmann::json& j) {
    Pose p;
    for (const auto& q : j.at("rotations")) {
        if (!q.is_array() || q.size() != 4) throw DataError("pose rotation must have 4 components");
        Quat r(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
        const double n = r.norm();
        if (!(n > 0.0)) throw DataError("pose rotation has zero norm");
        // Unit input is kept bit-exact.
        p.rotations.push_back(std::abs(n - 1.0) > 1e-9 ? Quat(r / n) : r);
    }
    p.root_translation = vec3_from_json(j.at("root_translation"));
    return p;
}

nlohmann::json pose_to_json(const Pose& pose) {
    nlohmann::json rots = nlohmann::json::array();
    for (const Quat& q : pose.rotations) rots.push_back({q[0], q[1], q[2], q[3]});
    return {{"rotations", rots},
            {"root_translation",
             {pose.root_translation.x(), pose.root_translation.y(), pose.root_translation.z()}}};
}

std::vector<Pose> poses_from_json(const nlohmann::json& j) {
    std::vector<Pose> out;
    for (const auto& f : j.at("frames")) out.push_back(pose_from_json(f));
    return out;
}

nlohmann::json poses_to_json(std::span<const Pose> poses) {
    nlohmann::json frames = nlohmann::json::array();
    for (const Pose& p : poses) frames.push_back(pose_to_json(p));
    return {{"frames", frames}};
}

}  // namespace stga
