#pragma once

// Kinematics, JSIM (composite-rigid-body algorithm), centroidal inertia and the
// two inverse inertia matrices (IIM) mapping contact impulse to contact-velocity jump.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "impactjump/errors.hpp"
#include "impactjump/model.hpp"
#include "impactjump/spatial.hpp"

namespace impactjump {

struct JointState {
    VecX q;
    VecX qd;
};

inline void check_dimension(const ChainModel& m, const VecX& v, const char* what) {
    if (v.size() != m.dof()) {
        throw DimensionError(std::string(what) + " has " + std::to_string(v.size()) + " entries, model has " +
                             std::to_string(m.dof()) + " joints");
    }
}

struct Kinematics {
    std::vector<Transform> links;   ///< link i frame in the inertial frame
    std::vector<Vec3> joint_axes;   ///< unit joint axes, inertial coordinates
    std::vector<Vec3> joint_points; ///< a point on each joint axis, inertial coordinates
    Transform contact;              ///< contact link frame translated by the contact offset
};

inline Kinematics forward_kinematics(const ChainModel& m, const VecX& q) {
    check_dimension(m, q, "q");
    Kinematics k;
    const auto n = static_cast<std::size_t>(m.dof());
    k.links.reserve(n);
    k.joint_axes.reserve(n);
    k.joint_points.reserve(n);
    Transform parent;
    for (std::size_t i = 0; i < n; ++i) {
        const JointSpec& j = m.joints[i];
        const Transform joint = parent * j.origin();
        k.joint_axes.push_back(joint.rotation() * j.axis);
        k.joint_points.push_back(joint.translation());
        const double qi = q(static_cast<Eigen::Index>(i));
        const Transform motion = j.kind == JointKind::revolute
                                     ? Transform::from_rotation(Eigen::AngleAxisd(qi, j.axis).toRotationMatrix())
                                     : Transform::from_translation(qi * j.axis);
        parent = joint * motion;
        k.links.push_back(parent);
    }
    k.contact = k.links.at(static_cast<std::size_t>(m.contact.link)) * Transform::from_translation(m.contact.offset);
    return k;
}

/// Translational Jacobian of the contact point in inertial coordinates (3×D).
inline Mat3X point_jacobian_linear(const ChainModel& m, const Kinematics& k) {
    const int d = m.dof();
    Mat3X jac = Mat3X::Zero(3, d);
    const Vec3 p = k.contact.translation();
    for (int i = 0; i <= m.contact.link && i < d; ++i) {
        const auto s = static_cast<std::size_t>(i);
        jac.col(i) = m.joints[s].kind == JointKind::revolute ? Vec3(k.joint_axes[s].cross(p - k.joint_points[s]))
                                                             : k.joint_axes[s];
    }
    return jac;
}

inline Mat3X point_jacobian_linear(const ChainModel& m, const VecX& q) {
    return point_jacobian_linear(m, forward_kinematics(m, q));
}

/// Joint i motion subspace as a spatial twist about the inertial origin.
inline Vec6 motion_subspace(const ChainModel& m, const Kinematics& k, int i) {
    const auto s = static_cast<std::size_t>(i);
    Vec6 out;
    if (m.joints[s].kind == JointKind::revolute) {
        out << k.joint_points[s].cross(k.joint_axes[s]), k.joint_axes[s];
    } else {
        out << k.joint_axes[s], Vec3::Zero();
    }
    return out;
}

/// Link i spatial inertia about the inertial origin, inertial coordinates.
inline Mat6 link_spatial_inertia(const ChainModel& m, const Kinematics& k, int i) {
    const auto s = static_cast<std::size_t>(i);
    const LinkInertia& l = m.links[s];
    const Mat3& r = k.links[s].rotation();
    return spatial_inertia(l.mass, k.links[s].apply(l.com), r * l.rot_inertia * r.transpose());
}

/// 2-norm condition number σ_max / σ_min.
inline double condition_number(const MatX& a) {
    if (a.size() == 0) return 1.0;
    Eigen::JacobiSVD<MatX> svd(a);
    const auto& s = svd.singularValues();
    return s(0) / s(s.size() - 1);
}

/// Joint-space inertia matrix with a cached Cholesky factorization; M⁻¹ is never formed.
class Jsim {
public:
    Jsim() = default;
    explicit Jsim(MatX matrix) : matrix_(std::move(matrix)), llt_(matrix_) {
        if (llt_.info() != Eigen::Success) throw PreconditionError("JSIM is not positive definite");
        condition_number_ = impactjump::condition_number(matrix_);
    }

    const MatX& matrix() const { return matrix_; }
    double condition_number() const { return condition_number_; }
    int size() const { return static_cast<int>(matrix_.rows()); }

    /// M⁻¹ B via the factorization.
    template <typename Derived>
    MatX solve(const Eigen::MatrixBase<Derived>& b) const {
        return llt_.solve(b);
    }

private:
    MatX matrix_;
    Eigen::LLT<MatX> llt_;
    double condition_number_ = 1.0;
};

/// Composite-rigid-body algorithm with inertial-frame spatial quantities:
/// M_ij = S_iᵀ I^c_max(i,j) S_j where I^c_k accumulates links k..D−1.
inline MatX jsim_matrix(const ChainModel& m, const Kinematics& k) {
    const int d = m.dof();
    MatX out = MatX::Zero(d, d);
    Mat6 composite = Mat6::Zero();
    for (int i = d - 1; i >= 0; --i) {
        composite += link_spatial_inertia(m, k, i);
        const Vec6 force = composite * motion_subspace(m, k, i);
        for (int j = i; j >= 0; --j) {
            out(i, j) = force.dot(motion_subspace(m, k, j));
            out(j, i) = out(i, j);
        }
    }
    return out;
}

inline Jsim jsim(const ChainModel& m, const VecX& q) { return Jsim(jsim_matrix(m, forward_kinematics(m, q))); }

/// Whole chain treated as one rigid body frozen at q; centroidal frame aligned
/// with the inertial frame.
struct CentroidalInertia {
    double mass = 0.0;
    Vec3 com = Vec3::Zero();           ///< inertial coordinates
    Mat3 rot_inertia = Mat3::Zero();   ///< about com, inertial coordinates

    /// blockdiag(m·E, 𝓘)
    Mat6 spatial() const {
        Mat6 out = Mat6::Zero();
        out.topLeftCorner<3, 3>() = mass * Mat3::Identity();
        out.bottomRightCorner<3, 3>() = rot_inertia;
        return out;
    }
};

inline CentroidalInertia centroidal_inertia(const ChainModel& m, const Kinematics& k) {
    CentroidalInertia c;
    Vec3 first_moment = Vec3::Zero();
    for (int i = 0; i < m.dof(); ++i) {
        const auto& l = m.links[static_cast<std::size_t>(i)];
        c.mass += l.mass;
        first_moment += l.mass * k.links[static_cast<std::size_t>(i)].apply(l.com);
    }
    c.com = first_moment / c.mass;
    for (int i = 0; i < m.dof(); ++i) {
        const auto s = static_cast<std::size_t>(i);
        const auto& l = m.links[s];
        const Mat3& r = k.links[s].rotation();
        const Vec3 d = k.links[s].apply(l.com) - c.com;
        c.rot_inertia += r * l.rot_inertia * r.transpose() + l.mass * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
    }
    c.rot_inertia = 0.5 * (c.rot_inertia + c.rot_inertia.transpose());
    return c;
}

inline CentroidalInertia centroidal_inertia(const ChainModel& m, const VecX& q) {
    return centroidal_inertia(m, forward_kinematics(m, q));
}

enum class IimFlavor { crb, gm };

inline const char* to_string(IimFlavor f) { return f == IimFlavor::crb ? "crb" : "gm"; }

/// Inverse inertia matrix W: contact impulse → contact-point velocity jump.
struct Iim {
    Mat3 matrix = Mat3::Identity();
    IimFlavor flavor = IimFlavor::crb;
    bool rank_deficient = false;
};

/// Scale-invariant rank test for symmetric PSD 3×3 maps: λ_min ≤ 1e-10·trace.
inline bool rank_deficient_3x3(const Mat3& a) {
    const Mat3 sym = 0.5 * (a + a.transpose());
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(sym, Eigen::EigenvaluesOnly).eigenvalues();
    return ev(0) <= 1e-10 * sym.trace();
}

/// W_crb = (1/m)E − Rᵀ p̂ 𝓘⁻¹ p̂ R, with p the contact point relative to the
/// composite COM and R the contact-frame axes as columns in inertial coordinates.
/// `to_contact` is Rᵀ (rows are the contact axes); the result is in contact coordinates.
inline Iim iim_crb(const CentroidalInertia& c, const Vec3& contact_point, const Mat3& to_contact = Mat3::Identity()) {
    const Mat3 p = skew(contact_point - c.com);
    const Mat3 r = to_contact.transpose();
    const Mat3 lever = c.rot_inertia.llt().solve(p * r);
    Iim w;
    w.matrix = Mat3::Identity() / c.mass - r.transpose() * p * lever;
    w.matrix = 0.5 * (w.matrix + w.matrix.transpose());
    w.flavor = IimFlavor::crb;
    return w;
}

inline Iim iim_crb(const ChainModel& m, const VecX& q, const Mat3& to_contact = Mat3::Identity()) {
    const Kinematics k = forward_kinematics(m, q);
    return iim_crb(centroidal_inertia(m, k), k.contact.translation(), to_contact);
}

/// W_gm = J M⁻¹ Jᵀ for a contact-coordinate Jacobian.
inline Iim iim_gm(const Mat3X& jac, const Jsim& jsim) {
    Iim w;
    w.matrix = jac * jsim.solve(jac.transpose());
    w.matrix = 0.5 * (w.matrix + w.matrix.transpose());
    w.flavor = IimFlavor::gm;
    w.rank_deficient = rank_deficient_3x3(w.matrix);
    return w;
}

inline Iim iim_gm(const ChainModel& m, const VecX& q, const Mat3& to_contact = Mat3::Identity()) {
    const Kinematics k = forward_kinematics(m, q);
    return iim_gm(to_contact * point_jacobian_linear(m, k), Jsim(jsim_matrix(m, k)));
}

}  // namespace impactjump
