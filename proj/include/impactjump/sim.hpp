#pragma once

// Penalty-contact impact simulation used as a ground-truth oracle, plus jump
// extraction and synthetic dataset generation.
//
// All regimes are gravity compensated (the commanded torque contains G(q)), so
// gravity cancels and is not integrated. Regimes:
//   locked  the impact-configuration chain integrated as one free rigid body;
//           joint velocities are reported as q̇₀ + J⁺(v_p(t) − v_p(0)) with q frozen
//   free    τ = G(q): full equations of motion with Coriolis terms
//   pd      τ = G(q) + kp(q₀ + q̇₀ t − q) + kd(q̇₀ − q̇)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "impactjump/dynamics.hpp"
#include "impactjump/errors.hpp"
#include "impactjump/eval.hpp"
#include "impactjump/impact.hpp"
#include "impactjump/model.hpp"
#include "impactjump/spatial.hpp"
#include "json.hpp"

namespace impactjump {

/// Joint torques τ = M q̈ + C(q, q̇) + G(q) by recursive Newton-Euler with
/// inertial-frame spatial vectors; gravity enters as a base acceleration.
inline VecX inverse_dynamics(const ChainModel& m, const Kinematics& k, const VecX& qd, const VecX& qdd,
                             const Vec3& gravity) {
    check_dimension(m, qd, "qd");
    check_dimension(m, qdd, "qdd");
    const int d = m.dof();
    std::vector<Vec6> force(static_cast<std::size_t>(d));
    std::vector<Vec6> axes(static_cast<std::size_t>(d));
    Vec6 v = Vec6::Zero();
    Vec6 a;
    a << -gravity, Vec3::Zero();
    for (int i = 0; i < d; ++i) {
        const auto s = static_cast<std::size_t>(i);
        axes[s] = motion_subspace(m, k, i);
        const Vec6 vj = axes[s] * qd(i);
        v += vj;
        a += axes[s] * qdd(i) + spatial_cross(Twist::from_vector(v)) * vj;
        const Mat6 inertia = link_spatial_inertia(m, k, i);
        force[s] = inertia * a + spatial_cross_dual(Twist::from_vector(v)) * (inertia * v);
    }
    VecX tau(d);
    Vec6 acc = Vec6::Zero();
    for (int i = d - 1; i >= 0; --i) {
        acc += force[static_cast<std::size_t>(i)];
        tau(i) = axes[static_cast<std::size_t>(i)].dot(acc);
    }
    return tau;
}

inline VecX inverse_dynamics(const ChainModel& m, const VecX& q, const VecX& qd, const VecX& qdd) {
    return inverse_dynamics(m, forward_kinematics(m, q), qd, qdd, m.gravity);
}

struct ContactSurface {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();  ///< outward unit normal
    double stiffness = 1e6;       ///< N/m
    double damping = 0.0;         ///< N·s/m
    double mu = 0.0;
    std::optional<Vec3> hint_tangent;  ///< contact-frame x-axis hint
};

enum class Regime { locked, free, pd };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::locked: return "locked";
        case Regime::free: return "free";
        case Regime::pd: return "pd";
    }
    return "?";
}

inline std::optional<Regime> parse_regime(const std::string& s) {
    if (s == "locked") return Regime::locked;
    if (s == "free") return Regime::free;
    if (s == "pd") return Regime::pd;
    return std::nullopt;
}

struct DetectionWindow {
    double pre = 0.005;   ///< s before detection
    double post = 0.02;   ///< s after detection
};

struct SimConfig {
    Regime regime = Regime::locked;
    std::optional<PdGains> pd;    ///< pd regime; falls back to the model's gains
    double step = 1e-6;           ///< s
    double duration = 1.0;        ///< s, upper bound on simulated time
    DetectionWindow window;
    double friction_velocity_scale = 1e-4;  ///< m/s, tanh regularization of Coulomb friction
};

/// Step too large for the contact or controller stiffness.
class StepSizeError : public PreconditionError {
public:
    StepSizeError(const std::string& what, double suggested)
        : PreconditionError(what + "; suggested step <= " + format(suggested) + " s"), suggested_(suggested) {}
    double suggested_step() const { return suggested_; }

private:
    static std::string format(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v);
        return buf;
    }
    double suggested_;
};

class NoImpactError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

struct SimResult {
    std::vector<double> time;
    std::vector<VecX> q;
    std::vector<VecX> qd;
    std::vector<Vec3> force;             ///< contact force, contact coordinates
    std::vector<Vec3> contact_velocity;  ///< contact-point velocity, contact coordinates
    ContactFrame frame;
    std::size_t detection_index = 0;
    double detection_time = 0.0;
    double impact_duration = 0.0;
    Vec3 impulse = Vec3::Zero();  ///< trapezoidal integral of `force` over the whole series
    VecX jump;                    ///< extract_jump over the detection window
    VecX qd_pre_mean;
    VecX q_detection;
    Vec3 velocity_before = Vec3::Zero();  ///< contact coordinates, sample before detection
    Vec3 velocity_after = Vec3::Zero();   ///< contact coordinates, first sample after contact ends
    double restitution = 0.0;             ///< −v_n⁺ / v_n⁻
};

/// Δq̇° per joint: the post-window sample with the largest deviation from the
/// pre-window mean, minus that mean.
inline VecX extract_jump(const std::vector<double>& time, const std::vector<VecX>& qd, std::size_t detection,
                         const DetectionWindow& window, VecX* pre_mean = nullptr) {
    if (time.size() != qd.size() || time.empty()) throw DimensionError("time and velocity series lengths differ");
    if (detection >= time.size()) throw std::out_of_range("detection index outside the series");
    if (window.pre <= 0.0 || window.post <= 0.0) throw std::invalid_argument("window lengths must be positive");
    const double t0 = time[detection];
    const double tol = 1e-9 * std::max(1.0, std::abs(t0));
    if (t0 - window.pre < time.front() - tol || t0 + window.post > time.back() + tol) {
        throw std::out_of_range("detection window exceeds the series bounds");
    }
    const Eigen::Index d = qd.front().size();
    // Mean as offset from the first window sample, exact for constant segments.
    std::size_t first = detection;
    for (std::size_t i = 0; i < detection; ++i) {
        if (time[i] >= t0 - window.pre - tol) {
            first = i;
            break;
        }
    }
    VecX mean = qd[first];
    if (first < detection) {
        VecX offset = VecX::Zero(d);
        for (std::size_t i = first; i < detection; ++i) offset += qd[i] - qd[first];
        mean += offset / static_cast<double>(detection - first);
    }
    VecX jump = VecX::Zero(d);
    for (std::size_t i = detection; i < time.size() && time[i] <= t0 + window.post + tol; ++i) {
        const VecX dev = qd[i] - mean;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (std::abs(dev(j)) > std::abs(jump(j))) jump(j) = dev(j);
        }
    }
    if (pre_mean) *pre_mean = mean;
    return jump;
}

namespace detail {

inline MatX pseudo_inverse_rows(const Mat3X& jac) {
    const Mat3 jjt = jac * jac.transpose();
    if (rank_deficient_3x3(jjt)) throw SingularConfigurationError("contact Jacobian is rank deficient");
    return jac.transpose() * jjt.ldlt().solve(Mat3::Identity());
}

struct ContactForce {
    Vec3 world = Vec3::Zero();
    double penetration = 0.0;
};

inline ContactForce penalty_force(const ContactSurface& s, const Vec3& p, const Vec3& v, double eps) {
    ContactForce out;
    out.penetration = -s.normal.dot(p - s.point);
    if (out.penetration <= 0.0) return out;
    const double rate = -s.normal.dot(v);
    const double fn = std::max(0.0, s.stiffness * out.penetration + s.damping * rate);
    const Vec3 vt = v - s.normal.dot(v) * s.normal;
    const double speed = vt.norm();
    Vec3 ft = Vec3::Zero();
    if (speed > 0.0) ft = -s.mu * fn * std::tanh(speed / eps) * (vt / speed);
    out.world = fn * s.normal + ft;
    return out;
}

inline void check_step(const Mat3& w_world, const ContactSurface& s, double approach_speed, const SimConfig& cfg,
                       const std::optional<PdGains>& gains, const std::optional<Jsim>& jsim) {
    const double h = cfg.step;
    const double wnn = s.normal.dot(w_world * s.normal);
    if (!(wnn > 0.0)) throw InvalidIimError("effective normal inverse mass must be positive");
    const double omega = std::sqrt(s.stiffness * wnn);
    if (omega * h > 0.1) throw StepSizeError("contact stiffness too high for the step (omega*h > 0.1)", 0.1 / omega);
    if (s.damping * wnn * h > 0.5) {
        throw StepSizeError("contact damping too high for the step", 0.5 / (s.damping * wnn));
    }
    const Mat3 p = Mat3::Identity() - s.normal * s.normal.transpose();
    const double wtt = Eigen::SelfAdjointEigenSolver<Mat3>(p * w_world * p).eigenvalues().maxCoeff();
    const double f_peak = approach_speed * (std::sqrt(s.stiffness / wnn) + s.damping);
    const double friction_rate = s.mu * f_peak * wtt / cfg.friction_velocity_scale;
    if (friction_rate * h > 1.5) {
        throw StepSizeError("regularized friction too stiff for the step", 1.5 / friction_rate);
    }
    if (gains && jsim) {
        const MatX minv = jsim->solve(MatX::Identity(jsim->size(), jsim->size()));
        const double lam = Eigen::SelfAdjointEigenSolver<MatX>(0.5 * (minv + minv.transpose())).eigenvalues().maxCoeff();
        const double kp = gains->kp.maxCoeff(), kd = gains->kd.maxCoeff();
        if (std::sqrt(kp * lam) * h > 0.1) throw StepSizeError("PD stiffness too high for the step", 0.1 / std::sqrt(kp * lam));
        if (kd * lam * h > 0.5) throw StepSizeError("PD damping too high for the step", 0.5 / (kd * lam));
    }
}

inline Vec3 trapezoid(const std::vector<double>& t, const std::vector<Vec3>& f) {
    Vec3 sum = Vec3::Zero();
    for (std::size_t i = 1; i < t.size(); ++i) sum += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    return sum;
}

}  // namespace detail

inline SimResult simulate_impact(const ChainModel& m, const VecX& q0, const VecX& qd0, const ContactSurface& surface,
                                 const SimConfig& cfg) {
    check_dimension(m, q0, "q0");
    check_dimension(m, qd0, "qd0");
    if (!(surface.stiffness > 0.0) || !(surface.damping >= 0.0) || !(surface.mu >= 0.0)) {
        throw std::invalid_argument("surface needs stiffness > 0, damping >= 0, mu >= 0");
    }
    if (!(cfg.step > 0.0) || !(cfg.duration > 0.0) || !(cfg.window.pre > 0.0) || !(cfg.window.post > 0.0) ||
        !(cfg.friction_velocity_scale > 0.0)) {
        throw std::invalid_argument("step, duration, window lengths and friction scale must be positive");
    }
    if (m.dof() < 3) throw AssumptionError("simulation needs at least three degrees of freedom");
    const double h = cfg.step;
    const double eps = cfg.friction_velocity_scale;

    SimResult out;
    out.frame = contact_frame(surface.normal, surface.hint_tangent);
    const Kinematics k0 = forward_kinematics(m, q0);
    const Mat3X j0 = point_jacobian_linear(m, k0);
    const Vec3 v0 = j0 * qd0;
    if (!(surface.normal.dot(v0) < 0.0)) throw AssumptionError("contact point is not approaching the surface");
    const Jsim jsim0(jsim_matrix(m, k0));

    std::optional<PdGains> gains;
    if (cfg.regime == Regime::pd) {
        gains = cfg.pd ? cfg.pd : m.pd;
        if (!gains) throw std::invalid_argument("pd regime needs gains");
        if (gains->kp.size() != m.dof() || gains->kd.size() != m.dof()) throw DimensionError("PD gains must have D entries");
    }
    const CentroidalInertia crb = centroidal_inertia(m, k0);
    const Mat3 w_world = cfg.regime == Regime::locked ? iim_crb(crb, k0.contact.translation()).matrix
                                                       : iim_gm(j0, jsim0).matrix;
    detail::check_step(w_world, surface, -surface.normal.dot(v0), cfg, gains,
                       cfg.regime == Regime::pd ? std::optional<Jsim>(jsim0) : std::nullopt);

    const std::size_t max_steps = static_cast<std::size_t>(std::ceil(cfg.duration / h));
    auto record = [&](double t, const VecX& q, const VecX& qd, const Vec3& f_world, const Vec3& v_world) {
        out.time.push_back(t);
        out.q.push_back(q);
        out.qd.push_back(qd);
        out.force.push_back(out.frame.to_contact(f_world));
        out.contact_velocity.push_back(out.frame.to_contact(v_world));
    };
    std::optional<std::size_t> detection;
    std::size_t last_contact = 0;
    auto done = [&](std::size_t i) { return detection && out.time[i] >= out.time[*detection] + cfg.window.post; };
    auto note_contact = [&](std::size_t i, double penetration, const Vec3& f) {
        if (!detection && penetration > 0.0) detection = i;
        if (f.squaredNorm() > 0.0) last_contact = i;
    };

    if (cfg.regime == Regime::locked) {
        // Free rigid body about its COM; body-frame Newton-Euler.
        const MatX jplus = detail::pseudo_inverse_rows(j0);
        Mat6 inertia = crb.spatial();
        const Mat6 inertia_inv = inertia.inverse();
        Mat3 rot = Mat3::Identity();
        Vec3 com = crb.com;
        const Vec3 r_body = k0.contact.translation() - crb.com;
        Vec6 twist;
        twist << v0, Vec3::Zero();
        auto point = [&](Vec3& p, Vec3& v) {
            p = com + rot * r_body;
            v = rot * (twist.head<3>() + twist.tail<3>().cross(r_body));
        };
        Vec3 p, v;
        point(p, v);
        for (std::size_t i = 0;; ++i) {
            const auto f = detail::penalty_force(surface, p, v, eps);
            record(static_cast<double>(i) * h, q0, qd0 + jplus * (v - v0), f.world, v);
            note_contact(i, f.penetration, f.world);
            if (done(i)) break;
            if (i >= max_steps) {
                if (detection) break;
                throw NoImpactError("no contact within the simulated duration");
            }
            const Vec3 fb = rot.transpose() * f.world;
            Vec6 wrench;
            wrench << fb, r_body.cross(fb);
            const Vec6 acc = inertia_inv * (wrench - spatial_cross_dual(Twist::from_vector(twist)) * (inertia * twist));
            twist += h * acc;
            com += h * (rot * twist.head<3>());
            const Vec3 dtheta = h * twist.tail<3>();
            if (dtheta.norm() > 0.0) rot = rot * Eigen::AngleAxisd(dtheta.norm(), dtheta.normalized()).toRotationMatrix();
            point(p, v);
        }
    } else {
        VecX q = q0, qd = qd0;
        const Vec3 no_gravity = Vec3::Zero();
        for (std::size_t i = 0;; ++i) {
            const double t = static_cast<double>(i) * h;
            const Kinematics k = forward_kinematics(m, q);
            const Mat3X j = point_jacobian_linear(m, k);
            const Vec3 v = j * qd;
            const auto f = detail::penalty_force(surface, k.contact.translation(), v, eps);
            record(t, q, qd, f.world, v);
            note_contact(i, f.penetration, f.world);
            if (done(i)) break;
            if (i >= max_steps) {
                if (detection) break;
                throw NoImpactError("no contact within the simulated duration");
            }
            VecX tau = j.transpose() * f.world - inverse_dynamics(m, k, qd, VecX::Zero(m.dof()), no_gravity);
            if (gains) tau += gains->kp.cwiseProduct(q0 + qd0 * t - q) + gains->kd.cwiseProduct(qd0 - qd);
            const Eigen::LLT<MatX> llt(jsim_matrix(m, k));
            if (llt.info() != Eigen::Success) throw PreconditionError("JSIM lost positive definiteness during integration");
            qd += h * llt.solve(tau);
            q += h * qd;
        }
    }

    out.detection_index = *detection;
    out.detection_time = out.time[*detection];
    out.q_detection = out.q[*detection];
    out.impulse = detail::trapezoid(out.time, out.force);
    out.impact_duration = out.time[last_contact] - out.time[*detection] + h;
    out.jump = extract_jump(out.time, out.qd, *detection, cfg.window, &out.qd_pre_mean);
    out.velocity_before = out.contact_velocity[*detection > 0 ? *detection - 1 : 0];
    out.velocity_after = out.contact_velocity[std::min(last_contact + 1, out.time.size() - 1)];
    const double vn = out.velocity_before.z();
    out.restitution = vn < 0.0 ? -out.velocity_after.z() / vn : 0.0;
    return out;
}

/// Grid of impact experiments: configurations × normal speeds × tangential speeds × repetitions.
struct Scenario {
    struct Config {
        std::string name;
        VecX q;
    };
    std::vector<Config> configs;
    std::vector<double> speeds;                              ///< m/s, approach speed along −normal
    std::vector<Vec2> tangential{Vec2::Zero()};               ///< m/s, contact-frame tangential reference velocity
    int repetitions = 10;
    double sigma_q = 0.0;
    double sigma_qd = 0.0;
    std::uint64_t seed = 0;
    Regime regime = Regime::locked;
    std::optional<PdGains> pd;
    Vec3 normal = Vec3::UnitZ();
    double stiffness = 1e6;
    std::optional<double> damping;
    double damping_ratio = 1.0;  ///< used when `damping` is absent: c = 2ζ·sqrt(k / W_nn)
    double mu = 0.0;
    double step = 1e-6;
    DetectionWindow window;
};

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline Scenario load_scenario(std::string_view text, int dof) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
    static const std::vector<std::string> known{"configs",  "speeds",  "tangential", "repetitions", "sigma_q",
                                                "sigma_qd", "seed",    "regime",     "pd",          "surface",
                                                "step",     "window"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ScenarioError("unknown scenario key '" + key + "'");
    }
    auto number = [](const nlohmann::json& v, const std::string& what) {
        if (!v.is_number()) throw ScenarioError(what + " must be a number");
        return v.get<double>();
    };
    auto vector = [&](const nlohmann::json& v, const std::string& what, std::size_t n) {
        if (!v.is_array() || (n && v.size() != n)) {
            throw ScenarioError(what + " must be an array" + (n ? " of " + std::to_string(n) + " numbers" : ""));
        }
        VecX out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], what);
        return out;
    };
    Scenario s;
    if (!j.contains("configs") || !j["configs"].is_array() || j["configs"].empty()) {
        throw ScenarioError("scenario needs a non-empty 'configs' array");
    }
    for (const auto& c : j["configs"]) {
        if (!c.is_object() || !c.contains("name") || !c["name"].is_string() || !c.contains("q")) {
            throw ScenarioError("each config needs 'name' and 'q'");
        }
        const std::string name = c["name"].get<std::string>();
        if (name.empty() || name.find(',') != std::string::npos) throw ScenarioError("config names must be non-empty and comma-free");
        s.configs.push_back({name, vector(c["q"], "config '" + name + "' q", static_cast<std::size_t>(dof))});
    }
    if (!j.contains("speeds")) throw ScenarioError("scenario needs 'speeds'");
    const VecX speeds = vector(j["speeds"], "speeds", 0);
    for (Eigen::Index i = 0; i < speeds.size(); ++i) {
        if (!(speeds(i) > 0.0)) throw ScenarioError("speeds must be positive");
        s.speeds.push_back(speeds(i));
    }
    if (s.speeds.empty()) throw ScenarioError("speeds must not be empty");
    if (j.contains("tangential")) {
        s.tangential.clear();
        if (!j["tangential"].is_array()) throw ScenarioError("tangential must be an array of [t1, t2] pairs");
        for (const auto& t : j["tangential"]) s.tangential.push_back(vector(t, "tangential entry", 2));
        if (s.tangential.empty()) throw ScenarioError("tangential must not be empty");
    }
    if (j.contains("repetitions")) {
        if (!j["repetitions"].is_number_integer() || j["repetitions"].get<int>() < 1) throw ScenarioError("repetitions must be a positive integer");
        s.repetitions = j["repetitions"].get<int>();
    }
    if (j.contains("sigma_q")) s.sigma_q = number(j["sigma_q"], "sigma_q");
    if (j.contains("sigma_qd")) s.sigma_qd = number(j["sigma_qd"], "sigma_qd");
    if (s.sigma_q < 0.0 || s.sigma_qd < 0.0) throw ScenarioError("noise levels must be non-negative");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ScenarioError("seed must be a non-negative integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("regime")) {
        const auto r = j["regime"].is_string() ? parse_regime(j["regime"].get<std::string>()) : std::nullopt;
        if (!r) throw ScenarioError("regime must be 'locked', 'free' or 'pd'");
        s.regime = *r;
    }
    if (j.contains("pd")) {
        const auto& p = j["pd"];
        if (!p.is_object() || !p.contains("kp") || !p.contains("kd")) throw ScenarioError("pd needs 'kp' and 'kd'");
        s.pd = PdGains{vector(p["kp"], "pd kp", static_cast<std::size_t>(dof)), vector(p["kd"], "pd kd", static_cast<std::size_t>(dof))};
    }
    if (j.contains("surface")) {
        const auto& f = j["surface"];
        if (!f.is_object()) throw ScenarioError("surface must be an object");
        for (const auto& [key, _] : f.items()) {
            if (key != "normal" && key != "stiffness" && key != "damping" && key != "damping_ratio" && key != "mu") {
                throw ScenarioError("unknown surface key '" + key + "'");
            }
        }
        if (f.contains("normal")) {
            const Vec3 n = vector(f["normal"], "surface normal", 3);
            if (!(n.norm() > 0.0)) throw ScenarioError("surface normal must be non-zero");
            s.normal = n.normalized();
        }
        if (f.contains("stiffness")) s.stiffness = number(f["stiffness"], "surface stiffness");
        if (f.contains("damping")) s.damping = number(f["damping"], "surface damping");
        if (f.contains("damping_ratio")) s.damping_ratio = number(f["damping_ratio"], "surface damping_ratio");
        if (f.contains("mu")) s.mu = number(f["mu"], "surface mu");
    }
    if (!(s.stiffness > 0.0) || (s.damping && *s.damping < 0.0) || s.damping_ratio < 0.0 || s.mu < 0.0) {
        throw ScenarioError("surface needs stiffness > 0 and non-negative damping, damping_ratio, mu");
    }
    if (j.contains("step")) s.step = number(j["step"], "step");
    if (!(s.step > 0.0)) throw ScenarioError("step must be positive");
    if (j.contains("window")) {
        const auto& w = j["window"];
        if (!w.is_object()) throw ScenarioError("window must be an object");
        if (w.contains("pre")) s.window.pre = number(w["pre"], "window pre");
        if (w.contains("post")) s.window.post = number(w["post"], "window post");
    }
    if (!(s.window.pre > 0.0) || !(s.window.post > 0.0)) throw ScenarioError("window lengths must be positive");
    return s;
}

inline std::string cell_id(const std::string& config, double speed, const Vec2& tangential) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return std::string(buf);
    };
    std::string id = config + "_v" + fmt(speed);
    if (!tangential.isZero(0.0)) id += "_t" + fmt(tangential.x()) + "_" + fmt(tangential.y());
    return id;
}

/// One rep of one cell: perturbed initial state, surface placed so that contact begins
/// just after the pre-window, simulated and turned into a dataset record.
inline ExperimentRecord simulate_cell(const ChainModel& m, const Scenario& s, const Scenario::Config& c, double speed,
                                      const Vec2& tangential, int rep, std::uint64_t cell_index, SimResult* detail_out = nullptr) {
    const auto seed_lo = static_cast<std::uint32_t>(s.seed), seed_hi = static_cast<std::uint32_t>(s.seed >> 32);
    std::seed_seq seq{seed_lo, seed_hi, static_cast<std::uint32_t>(cell_index), static_cast<std::uint32_t>(rep)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int d = m.dof();

    VecX q0 = c.q;
    for (int i = 0; i < d; ++i) q0(i) += s.sigma_q * gauss(rng);
    const Kinematics k = forward_kinematics(m, q0);
    const Mat3X jac = point_jacobian_linear(m, k);
    const ContactFrame frame = contact_frame(s.normal);
    const Vec3 v_des = frame.to_inertial(Vec3(tangential.x(), tangential.y(), -speed));
    VecX qd0 = detail::pseudo_inverse_rows(jac) * v_des;
    for (int i = 0; i < d; ++i) qd0(i) += s.sigma_qd * gauss(rng);

    const Vec3 v0 = jac * qd0;
    const double approach = -s.normal.dot(v0);
    if (!(approach > 0.0)) throw AssumptionError("perturbed state does not approach the surface");
    const double gap_time = 1.1 * s.window.pre + 10.0 * s.step;

    ContactSurface surface;
    surface.normal = s.normal;
    surface.point = k.contact.translation() - s.normal * (approach * gap_time);
    surface.stiffness = s.stiffness;
    surface.mu = s.mu;
    if (s.damping) {
        surface.damping = *s.damping;
    } else {
        const Mat3 w = s.regime == Regime::locked ? iim_crb(centroidal_inertia(m, k), k.contact.translation()).matrix
                                                  : iim_gm(jac, Jsim(jsim_matrix(m, k))).matrix;
        surface.damping = 2.0 * s.damping_ratio * std::sqrt(s.stiffness / s.normal.dot(w * s.normal));
    }

    SimConfig cfg;
    cfg.regime = s.regime;
    cfg.pd = s.pd;
    cfg.step = s.step;
    cfg.window = s.window;
    cfg.duration = gap_time + s.window.post + 1.0;
    SimResult res = simulate_impact(m, q0, qd0, surface, cfg);

    ExperimentRecord r;
    r.config_id = cell_id(c.name, speed, tangential);
    r.repetition = rep;
    r.q = res.q_detection;
    r.qd_pre = res.qd_pre_mean;
    r.delta_qd_measured = res.jump;
    r.impulse_measured = res.impulse;
    r.v_ref_normal = -speed;
    r.v_ref_tangential = tangential;
    r.c_r = std::clamp(res.restitution, 0.0, 1.0);
    r.mu = s.mu;
    if (detail_out) *detail_out = std::move(res);
    return r;
}

/// Rows ordered by config, speed, tangential speed, repetition (1-based).
inline std::vector<ExperimentRecord> generate_dataset(const ChainModel& m, const Scenario& s) {
    std::vector<ExperimentRecord> out;
    std::uint64_t cell = 0;
    for (const auto& c : s.configs) {
        check_dimension(m, c.q, "scenario q");
        for (double speed : s.speeds) {
            for (const Vec2& t : s.tangential) {
                for (int rep = 1; rep <= s.repetitions; ++rep) {
                    const std::string where = "cell " + cell_id(c.name, speed, t) + " rep " + std::to_string(rep) + ": ";
                    try {
                        out.push_back(simulate_cell(m, s, c, speed, t, rep, cell));
                    } catch (const PreconditionError& e) {
                        throw PreconditionError(where + e.what());
                    } catch (const std::exception& e) {
                        throw std::runtime_error(where + e.what());
                    }
                }
                ++cell;
            }
        }
    }
    return out;
}

}  // namespace impactjump
