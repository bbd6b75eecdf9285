#pragma once

#include <array>
#include <cmath>

namespace gustsim {

constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return x * x + y * y + z * z; }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 1e-12 ? *this / n : Vec3{0, 0, 0};
    }
    Vec3 cwise_mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    bool is_finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Euler angles in the ZYX (yaw-pitch-roll) convention. `gimbal_lock`
/// flags |pitch| within 1e-6 of pi/2; the angles remain usable.
struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    bool gimbal_lock = false;
};

/// Unit quaternion rotating body-frame vectors into the world frame.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    static Quat identity() { return {1, 0, 0, 0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }
    Quat conjugate() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& q) const {
        return {w * q.w - x * q.x - y * q.y - z * q.z,
                w * q.x + x * q.w + y * q.z - z * q.y,
                w * q.y - x * q.z + y * q.w + z * q.x,
                w * q.z + x * q.y - y * q.x + z * q.w};
    }

    /// Body -> world.
    Vec3 rotate(const Vec3& v) const {
        Vec3 u{x, y, z};
        Vec3 t = u.cross(v) * 2.0;
        return v + t * w + u.cross(t);
    }
    /// World -> body.
    Vec3 rotate_inverse(const Vec3& v) const { return conjugate().rotate(v); }

    bool is_finite() const {
        return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        double h = 0.5 * angle;
        double s = std::sin(h);
        return {std::cos(h), axis.x * s, axis.y * s, axis.z * s};
    }

    /// Exponential map of a rotation vector (axis * angle).
    static Quat exp_map(const Vec3& phi) {
        double angle = phi.norm();
        if (angle < 1e-12) {
            Quat q{1.0, 0.5 * phi.x, 0.5 * phi.y, 0.5 * phi.z};
            return q.normalized();
        }
        return from_axis_angle(phi / angle, angle);
    }
};

/// ZYX composition: q = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Quat quat_from_euler_zyx(double roll, double pitch, double yaw) {
    double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
    double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
    double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
    return {cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy};
}

inline EulerAngles euler_zyx(const Quat& q) {
    EulerAngles e;
    double sinp = 2.0 * (q.w * q.y - q.z * q.x);
    if (sinp > 1.0) sinp = 1.0;
    if (sinp < -1.0) sinp = -1.0;
    e.pitch = std::asin(sinp);
    if (std::abs(e.pitch) > 0.5 * kPi - 1e-6) {
        e.gimbal_lock = true;
        // Roll and yaw are coupled at the singularity; pin roll to zero.
        e.roll = 0.0;
        e.yaw = 2.0 * std::atan2(q.z, q.w);
        return e;
    }
    e.roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    e.yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    return e;
}

/// Quaternion from an orthonormal body basis expressed in world coordinates.
inline Quat quat_from_basis(const Vec3& xb, const Vec3& yb, const Vec3& zb) {
    // Shepperd's method on the column-major rotation matrix [xb yb zb].
    double m00 = xb.x, m01 = yb.x, m02 = zb.x;
    double m10 = xb.y, m11 = yb.y, m12 = zb.y;
    double m20 = xb.z, m21 = yb.z, m22 = zb.z;
    double tr = m00 + m11 + m22;
    Quat q;
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
    } else if (m00 > m11 && m00 > m22) {
        double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
        q = {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
    } else if (m11 > m22) {
        double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
        q = {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
    } else {
        double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
        q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
    }
    return q.normalized();
}

inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0) a += 2.0 * kPi;
    return a - kPi;
}

}  // namespace gustsim
