#include "stga/camera.hpp"

#include <nlohmann/json.hpp>

namespace stga {

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ArgumentError("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ArgumentError("camera: image size must be positive");
    if (!is_rigid(world_to_camera)) throw ArgumentError("camera: world_to_camera is not rigid");
}

Vec3 Camera::center() const {
    return -rotation().transpose() * world_to_camera.block<3, 1>(0, 3);
}

std::optional<Vec2> Camera::project(const Vec3& world) const {
    const Vec3 pc = to_camera(world);
    if (pc.z() <= kNear) return std::nullopt;
    return project_camera(pc);
}

Mat23 Camera::projection_jacobian(const Vec3& pc) const {
    const double iz = 1.0 / pc.z();
    const double iz2 = iz * iz;
    Mat23 j;
    j << fx * iz, 0.0, -fx * pc.x() * iz2, 0.0, fy * iz, -fy * pc.y() * iz2;
    return j;
}

Vec3 Camera::unproject_direction(const Vec2& pixel_dir, double depth) const {
    const Vec3 cam_dir(pixel_dir.x() * depth / fx, pixel_dir.y() * depth / fy, 0.0);
    return rotation().transpose() * cam_dir;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                       int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.width = width;
    cam.height = height;
    cam.world_to_camera = rigid(r, -r * eye);
    return cam;
}

Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto& m = j.at("world_to_camera");
    if (!m.is_array() || m.size() != 16) throw DataError("camera: world_to_camera needs 16 numbers");
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m.at(r * 4 + c).get<double>();
    }
    return cam;
}

nlohmann::json camera_to_json(const Camera& cam) {
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_camera(r, c));
    }
    return {{"fx", cam.fx},         {"fy", cam.fy},         {"cx", cam.cx},
            {"cy", cam.cy},         {"width", cam.width},   {"height", cam.height},
            {"world_to_camera", m}};
}

std::vector<Camera> cameras_from_json(const nlohmann::json& j) {
    std::vector<Camera> out;
    for (const auto& c : j.at("frames")) out.push_back(camera_from_json(c));
    return out;
}

nlohmann::json cameras_to_json(std::span<const Camera> cams) {
    nlohmann::json frames = nlohmann::json::array();
    for (const Camera& c : cams) frames.push_back(camera_to_json(c));
    return {{"frames", frames}};
}

}  // namespace stga
