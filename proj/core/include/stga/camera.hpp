#pragma once

#include "stga/types.hpp"

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stga {

/// Pinhole camera; camera space is x right, y down, z forward.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    Mat4 world_to_camera = Mat4::Identity();

    static constexpr double kNear = 0.01;

    /// Throws ArgumentError on non-positive focal lengths or a non-rigid pose.
    void validate() const;

    [[nodiscard]] Mat3 rotation() const { return world_to_camera.block<3, 3>(0, 0); }
    [[nodiscard]] Vec3 to_camera(const Vec3& world) const {
        return transform_point(world_to_camera, world);
    }
    [[nodiscard]] Vec3 center() const;

    /// Pixel coordinates of a camera-space point (no near test).
    [[nodiscard]] Vec2 project_camera(const Vec3& pc) const {
        return Vec2(fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy);
    }
    /// Pixel coordinates of a world point, or nullopt at or behind the near plane.
    [[nodiscard]] std::optional<Vec2> project(const Vec3& world) const;

    /// d(pixel)/d(camera-space point) at pc.
    [[nodiscard]] Mat23 projection_jacobian(const Vec3& pc) const;

    /// World direction of a pixel-space displacement at camera depth z.
    [[nodiscard]] Vec3 unproject_direction(const Vec2& pixel_dir, double depth) const;

    /// Camera at `eye` looking at `target` with world up vector `up`.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                          int width, int height);
};

[[nodiscard]] Camera camera_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json camera_to_json(const Camera& cam);

/// {"frames":[camera, ...]}
[[nodiscard]] std::vector<Camera> cameras_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json cameras_to_json(std::span<const Camera> cams);

}  // namespace stga
