#pragma once

// SE(3) transforms and 6D operators. Every 6-vector is stacked (linear; angular):
// twists as (v; w), wrenches as (f; m).

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace impactjump {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

inline Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return s;
}

/// Tolerances applied when a rotation enters the system from outside.
struct RotationTolerance {
    static constexpr double accept = 1e-9;
    static constexpr double repair = 1e-6;
};

/// Orthonormality defect max(|RᵀR − E|, |det R − 1|).
inline double rotation_defect(const Mat3& r) {
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(r.determinant() - 1.0));
}

/// Closest rotation in the Frobenius sense (polar factor via SVD).
inline Mat3 polar_project(const Mat3& r) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    return u * v.transpose();
}

/// Accepts r as is within 1e-9, re-orthonormalizes within 1e-6, throws otherwise.
inline Mat3 checked_rotation(const Mat3& r) {
    const double defect = rotation_defect(r);
    if (!std::isfinite(defect)) throw std::invalid_argument("rotation has non-finite entries");
    if (defect <= RotationTolerance::accept) return r;
    if (defect <= RotationTolerance::repair) return polar_project(r);
    throw std::invalid_argument("rotation is not orthonormal (defect " + std::to_string(defect) + ")");
}

/// Rotation from intrinsic XYZ Euler angles: R = Rx(roll)·Ry(pitch)·Rz(yaw).
inline Mat3 rotation_from_rpy(const Vec3& rpy) {
    return (Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()))
        .toRotationMatrix();
}

/// Inverse of rotation_from_rpy; pitch is kept in [−π/2, π/2].
inline Vec3 rpy_from_rotation(const Mat3& r) {
    const double pitch = std::atan2(r(0, 2), std::hypot(r(1, 2), r(2, 2)));
    double roll = 0.0;
    double yaw = 0.0;
    if (std::hypot(r(1, 2), r(2, 2)) > 1e-12) {
        roll = std::atan2(-r(1, 2), r(2, 2));
        yaw = std::atan2(-r(0, 1), r(0, 0));
    } else {
        // Gimbal lock: only roll ± yaw is defined, put it all in yaw.
        yaw = std::atan2(r(1, 0), r(1, 1));
    }
    return {roll, pitch, yaw};
}

/// Rigid motion g = (R, p) acting as x ↦ R x + p.
class Transform {
public:
    Transform() = default;
    Transform(const Mat3& rotation, const Vec3& translation)
        : rotation_(checked_rotation(rotation)), translation_(translation) {}

    static Transform identity() { return {}; }
    static Transform from_translation(const Vec3& p) { return {Mat3::Identity(), p}; }
    static Transform from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }
    static Transform from_xyz_rpy(const Vec3& xyz, const Vec3& rpy) {
        return {rotation_from_rpy(rpy), xyz};
    }

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }

    Transform operator*(const Transform& other) const {
        Transform out;
        out.rotation_ = rotation_ * other.rotation_;
        out.translation_ = rotation_ * other.translation_ + translation_;
        return out;
    }

    Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }

    Transform inverse() const {
        Transform out;
        out.rotation_ = rotation_.transpose();
        out.translation_ = -(rotation_.transpose() * translation_);
        return out;
    }

    Eigen::Matrix4d homogeneous() const {
        Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
        h.topLeftCorner<3, 3>() = rotation_;
        h.topRightCorner<3, 1>() = translation_;
        return h;
    }

private:
    Mat3 rotation_ = Mat3::Identity();
    Vec3 translation_ = Vec3::Zero();
};

struct Twist {
    Vec3 linear = Vec3::Zero();
    Vec3 angular = Vec3::Zero();

    static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
    Vec6 vector() const {
        Vec6 out;
        out << linear, angular;
        return out;
    }
};

struct Wrench {
    Vec3 force = Vec3::Zero();
    Vec3 moment = Vec3::Zero();

    static Wrench from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
    Vec6 vector() const {
        Vec6 out;
        out << force, moment;
        return out;
    }
};

/// Power pairing ⟨W, V⟩ = f·v + m·w.
inline double power(const Wrench& w, const Twist& v) {
    return w.force.dot(v.linear) + w.moment.dot(v.angular);
}

/// Ad_g = [R, p̂R; 0, R].
inline Mat6 adjoint_twist(const Transform& g) {
    Mat6 ad = Mat6::Zero();
    ad.topLeftCorner<3, 3>() = g.rotation();
    ad.topRightCorner<3, 3>() = skew(g.translation()) * g.rotation();
    ad.bottomRightCorner<3, 3>() = g.rotation();
    return ad;
}

/// Ad_{g⁻¹}ᵀ = [R, 0; p̂R, R].
inline Mat6 adjoint_wrench(const Transform& g) {
    Mat6 ad = Mat6::Zero();
    ad.topLeftCorner<3, 3>() = g.rotation();
    ad.bottomLeftCorner<3, 3>() = skew(g.translation()) * g.rotation();
    ad.bottomRightCorner<3, 3>() = g.rotation();
    return ad;
}

/// Motion cross operator V×, so that (V× X) is the rate of change of a
/// motion vector X carried by a frame moving with V.
inline Mat6 spatial_cross(const Twist& v) {
    Mat6 x = Mat6::Zero();
    x.topLeftCorner<3, 3>() = skew(v.angular);
    x.topRightCorner<3, 3>() = skew(v.linear);
    x.bottomRightCorner<3, 3>() = skew(v.angular);
    return x;
}

/// Dual (force) cross operator V×* = −(V×)ᵀ; the Newton-Euler bias is V×*·(I V).
inline Mat6 spatial_cross_dual(const Twist& v) {
    Mat6 x = Mat6::Zero();
    x.topLeftCorner<3, 3>() = skew(v.angular);
    x.bottomLeftCorner<3, 3>() = skew(v.linear);
    x.bottomRightCorner<3, 3>() = skew(v.angular);
    return x;
}

/// 6×6 spatial inertia of a body with mass m, centre of mass c and rotational
/// inertia I_c about the centre of mass, taken about the frame origin.
inline Mat6 spatial_inertia(double mass, const Vec3& com, const Mat3& rot_inertia_com) {
    const Mat3 c = skew(com);
    Mat6 out;
    out.topLeftCorner<3, 3>() = mass * Mat3::Identity();
    out.topRightCorner<3, 3>() = -mass * c;
    out.bottomLeftCorner<3, 3>() = mass * c;
    out.bottomRightCorner<3, 3>() = rot_inertia_com - mass * c * c;
    return out;
}

}  // namespace impactjump
