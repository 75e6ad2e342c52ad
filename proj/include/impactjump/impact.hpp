#pragma once

// Impulse calculation and joint-velocity-jump predictors, plus the friction
// diagnostics (cone check, stick coefficient, tangential phase field).
//
// All quantities live in the contact frame: z is the outward surface normal, so an
// approaching contact point has v_n < 0 and a compressive impulse has ι_z > 0.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "impactjump/dynamics.hpp"
#include "impactjump/errors.hpp"
#include "impactjump/spatial.hpp"

namespace impactjump {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct ContactFrame {
    Vec3 origin = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();  ///< inertial → contact; rows are x, y, z = normal
    std::optional<std::string> warning;

    Vec3 normal() const { return rotation.row(2).transpose(); }
    Vec3 to_contact(const Vec3& inertial) const { return rotation * inertial; }
    Vec3 to_inertial(const Vec3& contact) const { return rotation.transpose() * contact; }
};

/// Right-handed triad with z = normal. x is the hint projected onto the tangent
/// plane, else the inertial x-axis projected, else the inertial y-axis projected.
inline ContactFrame contact_frame(const Vec3& normal, const std::optional<Vec3>& hint_tangent = std::nullopt,
                                  const Vec3& origin = Vec3::Zero()) {
    if (!normal.allFinite() || std::abs(normal.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("contact normal must be a unit vector");
    }
    ContactFrame f;
    f.origin = origin;
    // sin(1e-6) bounds the accepted hint/normal angle.
    auto project = [&](const Vec3& v) -> std::optional<Vec3> {
        const Vec3 t = v - normal.dot(v) * normal;
        if (t.norm() <= std::sin(1e-6) * v.norm()) return std::nullopt;
        return t.normalized();
    };
    std::optional<Vec3> x;
    if (hint_tangent) {
        x = project(*hint_tangent);
        if (!x) f.warning = "tangent hint is parallel to the normal; using the inertial-axis fallback";
    }
    if (!x) x = project(Vec3::UnitX());
    if (!x) x = project(Vec3::UnitY());
    const Vec3 y = normal.cross(*x);
    f.rotation.row(0) = x->transpose();
    f.rotation.row(1) = y.transpose();
    f.rotation.row(2) = normal.transpose();
    return f;
}

enum class Method { classical, crb, gm, measured };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::classical: return "classical";
        case Method::crb: return "crb";
        case Method::gm: return "gm";
        case Method::measured: return "measured";
    }
    return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
    if (s == "classical") return Method::classical;
    if (s == "crb") return Method::crb;
    if (s == "gm") return Method::gm;
    return std::nullopt;
}

enum class TangentialMode { full, normal_only };

struct ImpactParams {
    double c_r = 0.0;
    double mu = 0.0;
};

struct Impulse {
    Vec3 vector = Vec3::Zero();  ///< N·s, contact coordinates
    Method method = Method::crb;
};

struct Prediction {
    VecX delta_qd;
    Impulse impulse;
    std::optional<Iim> iim;
    Method method = Method::crb;
    std::optional<TangentialMode> tangential_mode;  ///< classical only
    bool measured_impulse = false;
};

/// Δv = −(1 + c_r)·v⁻
inline Vec3 delta_v(const Vec3& v_pre, double c_r) { return -(1.0 + c_r) * v_pre; }

namespace detail {

inline void require_three_dof(const Mat3X& jac) {
    if (jac.cols() < 3) {
        throw AssumptionError("impact prediction needs at least three degrees of freedom, model has " +
                              std::to_string(jac.cols()));
    }
}

inline void require_jsim(const Mat3X& jac, const Jsim& m) {
    if (m.size() != jac.cols()) throw DimensionError("Jacobian and JSIM sizes disagree");
}

/// Jᵀ(JJᵀ)⁻¹ y
inline VecX row_pseudo_inverse_solve(const Mat3X& jac, const Vec3& y) {
    require_three_dof(jac);
    const Mat3 jjt = jac * jac.transpose();
    if (rank_deficient_3x3(jjt)) throw SingularConfigurationError("contact Jacobian is rank deficient (JJᵀ singular)");
    return jac.transpose() * jjt.ldlt().solve(y);
}

}  // namespace detail

/// ι_c = (J M⁻¹ Jᵀ)⁻¹ Δv
inline Impulse impulse_classical(const Mat3X& jac, const Jsim& m, const Vec3& dv) {
    detail::require_three_dof(jac);
    detail::require_jsim(jac, m);
    const Mat3 w = jac * m.solve(jac.transpose());
    if (rank_deficient_3x3(w)) throw SingularConfigurationError("J M⁻¹ Jᵀ is singular");
    return {w.ldlt().solve(dv), Method::classical};
}

/// Purely normal impulse ι = (0, 0, −(1 + c_r)·v_n⁻ / W₃₃).
inline Impulse normal_impulse(const Iim& w, double v_n_pre, double c_r) {
    const double wnn = w.matrix(2, 2);
    if (!(wnn > 0.0)) throw InvalidIimError("IIM normal entry must be positive, got " + std::to_string(wnn));
    return {Vec3(0.0, 0.0, -(1.0 + c_r) * v_n_pre / wnn), w.flavor == IimFlavor::crb ? Method::crb : Method::gm};
}

/// Δq̇_c = M⁻¹ Jᵀ ι_c, optionally with the tangential part of ι_c dropped.
inline Prediction predict_classical(const Mat3X& jac, const Jsim& m, const Vec3& dv, TangentialMode mode) {
    Impulse imp = impulse_classical(jac, m, dv);
    if (mode == TangentialMode::normal_only) imp.vector.head<2>().setZero();
    Prediction p;
    p.delta_qd = m.solve(jac.transpose() * imp.vector);
    p.impulse = imp;
    p.method = Method::classical;
    p.tangential_mode = mode;
    return p;
}

/// argmin ‖J Δq̇ − W ι‖² = Jᵀ(JJᵀ)⁻¹ W ι
inline Prediction predict_task_space(const Mat3X& jac, const Iim& w, const Impulse& imp) {
    Prediction p;
    p.delta_qd = detail::row_pseudo_inverse_solve(jac, w.matrix * imp.vector);
    p.impulse = imp;
    p.iim = w;
    p.method = w.flavor == IimFlavor::crb ? Method::crb : Method::gm;
    return p;
}

inline Prediction predict_crb(const Mat3X& jac, const Iim& w_crb, const Impulse& imp) {
    if (w_crb.flavor != IimFlavor::crb) throw std::invalid_argument("predict_crb needs a CRB IIM");
    return predict_task_space(jac, w_crb, imp);
}

inline Prediction predict_gm(const Mat3X& jac, const Iim& w_gm, const Impulse& imp) {
    if (w_gm.flavor != IimFlavor::gm) throw std::invalid_argument("predict_gm needs a GM IIM");
    if (w_gm.rank_deficient) throw SingularConfigurationError("W_gm is rank deficient");
    return predict_task_space(jac, w_gm, imp);
}

/// Everything the predictors need at one pre-impact state, in contact coordinates.
struct ImpactContext {
    Kinematics kinematics;
    ContactFrame frame;
    Mat3X jacobian;  ///< contact coordinates
    Jsim jsim;
    Iim w_crb;
    Iim w_gm;
    Vec3 v_pre = Vec3::Zero();  ///< J·q̇ before impact, contact coordinates
};

inline ImpactContext make_impact_context(const ChainModel& m, const VecX& q, const VecX& qd, const Vec3& normal,
                                         const std::optional<Vec3>& hint_tangent = std::nullopt) {
    check_dimension(m, q, "q");
    check_dimension(m, qd, "qd");
    ImpactContext ctx;
    ctx.kinematics = forward_kinematics(m, q);
    ctx.frame = contact_frame(normal, hint_tangent, ctx.kinematics.contact.translation());
    ctx.jacobian = ctx.frame.rotation * point_jacobian_linear(m, ctx.kinematics);
    detail::require_three_dof(ctx.jacobian);
    ctx.jsim = Jsim(jsim_matrix(m, ctx.kinematics));
    ctx.w_crb = iim_crb(centroidal_inertia(m, ctx.kinematics), ctx.kinematics.contact.translation(),
                        ctx.frame.rotation);
    ctx.w_gm = iim_gm(ctx.jacobian, ctx.jsim);
    if (ctx.w_gm.rank_deficient) {
        throw SingularConfigurationError("contact Jacobian is rank deficient at this configuration");
    }
    ctx.v_pre = ctx.jacobian * qd;
    return ctx;
}

/// Prediction with the method's own impulse: Eq.-10 normal impulse for crb/gm,
/// ι_c with the given tangential mode for classical.
inline Prediction predict(Method method, const ImpactContext& ctx, double c_r,
                          TangentialMode classical_mode = TangentialMode::normal_only) {
    switch (method) {
        case Method::classical:
            return predict_classical(ctx.jacobian, ctx.jsim, delta_v(ctx.v_pre, c_r), classical_mode);
        case Method::crb:
            return predict_crb(ctx.jacobian, ctx.w_crb, normal_impulse(ctx.w_crb, ctx.v_pre.z(), c_r));
        case Method::gm:
            return predict_gm(ctx.jacobian, ctx.w_gm, normal_impulse(ctx.w_gm, ctx.v_pre.z(), c_r));
        case Method::measured: break;
    }
    throw std::invalid_argument("no predictor for method 'measured'");
}

/// Same formulas with a supplied impulse; classical uses Δq̇ = M⁻¹ Jᵀ ι̂.
inline Prediction predict_with_impulse(Method method, const ImpactContext& ctx, const Vec3& impulse) {
    const Impulse imp{impulse, Method::measured};
    Prediction p;
    switch (method) {
        case Method::classical:
            p.delta_qd = ctx.jsim.solve(ctx.jacobian.transpose() * impulse);
            p.impulse = imp;
            p.method = Method::classical;
            break;
        case Method::crb: p = predict_crb(ctx.jacobian, ctx.w_crb, imp); break;
        case Method::gm: p = predict_gm(ctx.jacobian, ctx.w_gm, imp); break;
        case Method::measured: throw std::invalid_argument("method must be classical, crb or gm");
    }
    p.measured_impulse = true;
    return p;
}

struct ConeCheck {
    bool satisfied = false;
    double margin = 0.0;  ///< μ·ι_z − ‖ι_t‖
};

inline ConeCheck friction_cone_check(const Vec3& impulse, double mu) {
    const double tangential = std::hypot(impulse.x(), impulse.y());
    const double margin = mu * impulse.z() - tangential;
    // Adhesive impulses (ι_z < 0) are never feasible, even at ι_t = 0.
    return {impulse.z() >= 0.0 && margin >= 0.0, impulse.z() < 0.0 ? std::min(margin, impulse.z()) : margin};
}

/// μ̄ = ‖W_tt⁻¹ W_tn‖: the smallest friction coefficient for which the impulse
/// ι_t = −W_tt⁻¹ W_tn ι_n, which cancels the tangential velocity change, lies in the cone.
inline double stick_coefficient(const Iim& w) {
    const Mat2 wtt = w.matrix.topLeftCorner<2, 2>();
    const Vec2 wtn = w.matrix.topRightCorner<2, 1>();
    if (std::abs(wtt.determinant()) <= 1e-14 * std::max(1.0, wtt.squaredNorm())) {
        throw InvalidIimError("tangential block of the IIM is singular");
    }
    return wtt.partialPivLu().solve(wtn).norm();
}

/// Rate of the tangential contact velocity with respect to accumulated normal
/// impulse while sliding along v_t: tangential block of W·(−μ v̂_t; 1).
inline Vec2 phase_direction(const Iim& w, double mu, const Vec2& v_t) {
    const Vec2 dir = v_t.normalized();
    return -mu * w.matrix.topLeftCorner<2, 2>() * dir + w.matrix.topRightCorner<2, 1>();
}

struct PhaseGrid {
    double x_min = -1.0;
    double x_max = 1.0;
    double y_min = -1.0;
    double y_max = 1.0;
    int nx = 21;
    int ny = 21;
};

struct PhaseSample {
    Vec2 v;  ///< tangential velocity sample
    Vec2 d;  ///< field value at v
};

struct InvariantDirection {
    Vec2 direction;       ///< unit tangent d* with field(d*) ∥ d*
    double angle = 0.0;   ///< atan2 of direction, in [−π, π]
    double radial_rate = 0.0;  ///< field(d*)·d*
    bool converging = false;   ///< flow along d* heads toward the origin
};

struct PhaseField {
    std::vector<PhaseSample> samples;
    std::vector<InvariantDirection> invariant_directions;
    bool all_directions_invariant = false;
    double stick_coefficient = 0.0;
    bool origin_stable = false;  ///< sticking sustainable once v_t reaches 0 (μ ≥ μ̄)
};

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Vec2 unit_at(double theta) { return {std::cos(theta), std::sin(theta)}; }

}  // namespace detail

/// Invariant directions of the sliding flow, found by bracketing sign changes of
/// field(d(θ)) × d(θ) on a fine circle grid and refining by bisection.
inline std::vector<InvariantDirection> invariant_directions(const Iim& w, double mu, bool* all_invariant = nullptr,
                                                             int resolution = 3600) {
    using detail::cross2;
    using detail::unit_at;
    const double two_pi = 2.0 * std::numbers::pi;
    auto g = [&](double th) {
        const Vec2 d = unit_at(th);
        return cross2(phase_direction(w, mu, d), d);
    };
    const double scale = std::max(w.matrix.cwiseAbs().maxCoeff(), 1e-300) * std::max(1.0, mu);

    std::vector<double> thetas(static_cast<std::size_t>(resolution) + 1);
    std::vector<double> values(thetas.size());
    double gmax = 0.0;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        thetas[i] = -std::numbers::pi + two_pi * static_cast<double>(i) / resolution;
        values[i] = g(thetas[i]);
        gmax = std::max(gmax, std::abs(values[i]));
    }

    std::vector<double> roots;
    const bool degenerate = gmax <= 1e-12 * scale;
    if (all_invariant) *all_invariant = degenerate;
    if (degenerate) {
        for (int k = 0; k < 8; ++k) roots.push_back(-std::numbers::pi + k * std::numbers::pi / 4.0);
    } else {
        for (std::size_t i = 0; i + 1 < thetas.size(); ++i) {
            double a = thetas[i];
            double b = thetas[i + 1];
            double ga = values[i];
            const double gb = values[i + 1];
            if (ga == 0.0) {
                roots.push_back(a);
                continue;
            }
            if (ga * gb > 0.0 || gb == 0.0) continue;
            for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
                const double mid = 0.5 * (a + b);
                const double gm = g(mid);
                if ((gm < 0.0) == (ga < 0.0)) {
                    a = mid;
                    ga = gm;
                } else {
                    b = mid;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
    }

    std::vector<InvariantDirection> out;
    for (double th : roots) {
        InvariantDirection d;
        d.direction = unit_at(th);
        d.angle = std::atan2(d.direction.y(), d.direction.x());
        d.radial_rate = phase_direction(w, mu, d.direction).dot(d.direction);
        d.converging = d.radial_rate < 0.0;
        out.push_back(d);
    }
    return out;
}

inline PhaseField tangential_phase_field(const Iim& w, double mu, const PhaseGrid& grid) {
    if (mu < 0.0) throw std::invalid_argument("friction coefficient must be non-negative");
    if (grid.nx < 1 || grid.ny < 1) throw std::invalid_argument("phase grid needs at least one sample per axis");
    PhaseField f;
    for (int iy = 0; iy < grid.ny; ++iy) {
        const double y = grid.ny == 1 ? grid.y_min : grid.y_min + (grid.y_max - grid.y_min) * iy / (grid.ny - 1);
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double x = grid.nx == 1 ? grid.x_min : grid.x_min + (grid.x_max - grid.x_min) * ix / (grid.nx - 1);
            const Vec2 v(x, y);
            if (v.norm() == 0.0) continue;  // sliding direction undefined at the origin
            f.samples.push_back({v, phase_direction(w, mu, v)});
        }
    }
    f.invariant_directions = invariant_directions(w, mu, &f.all_directions_invariant);
    f.stick_coefficient = stick_coefficient(w);
    f.origin_stable = mu >= f.stick_coefficient;
    return f;
}

/// v⁺ = v⁻ + J Δq̇
inline Vec3 post_impact_contact_velocity(const Mat3X& jac, const Vec3& v_pre, const VecX& delta_qd) {
    if (jac.cols() != delta_qd.size()) throw DimensionError("Jacobian columns and Δq̇ length disagree");
    return v_pre + jac * delta_qd;
}

}  // namespace impactjump
