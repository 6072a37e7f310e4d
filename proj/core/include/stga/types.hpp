#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace stga {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Quaternion stored as (w, x, y, z). Kept as a plain 4-vector so polynomial
/// evaluation and gradients stay linear algebra on R^4.
using Quat = Vec4;

/// Thrown for malformed arguments (shape mismatches, bad counts).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for missing or inconsistent on-disk data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when training diverges (non-finite loss for too many iterations).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_matrix(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to dL/dq for the map q -> quat_to_matrix(q) (q not renormalized).
inline Quat quat_to_matrix_backward(const Quat& q, const Mat3& dR) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Quat g;
    g[0] = 2.0 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) +
                  x * dR(2, 1));
    g[1] = 2.0 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2.0 * x * dR(1, 1) - w * dR(1, 2) +
                  z * dR(2, 0) + w * dR(2, 1) - 2.0 * x * dR(2, 2));
    g[2] = 2.0 * (-2.0 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) -
                  w * dR(2, 0) + z * dR(2, 1) - 2.0 * y * dR(2, 2));
    g[3] = 2.0 * (-2.0 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) -
                  2.0 * z * dR(1, 1) + y * dR(1, 2) + x * dR(2, 0) + y * dR(2, 1));
    return g;
}

/// Hamilton product a * b, both (w, x, y, z).
inline Quat quat_mul(const Quat& a, const Quat& b) {
    return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Quat axis_angle_quat(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return Quat(std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s);
}

inline Mat4 translation(const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.block<3, 1>(0, 3) = t;
    return m;
}

inline Mat4 rigid(const Mat3& r, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = r;
    m.block<3, 1>(0, 3) = t;
    return m;
}

/// Inverse of a rigid 4x4 transform without a general inverse.
inline Mat4 rigid_inverse(const Mat4& m) {
    const Mat3 rt = m.block<3, 3>(0, 0).transpose();
    return rigid(rt, -rt * m.block<3, 1>(0, 3));
}

inline bool is_rigid(const Mat4& m, double tol = 1e-9) {
    const Mat3 r = m.block<3, 3>(0, 0);
    if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(r.determinant() - 1.0) > tol) return false;
    return (m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= tol;
}

inline Vec3 transform_point(const Mat4& m, const Vec3& p) {
    return m.block<3, 3>(0, 0) * p + m.block<3, 1>(0, 3);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace stga
