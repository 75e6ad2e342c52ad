#pragma once

// Test fixtures: analytic chains and a random chain generator.

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "impactjump/model.hpp"

namespace impactjump::testing {

inline LinkInertia point_mass(double m, const Vec3& com = Vec3::Zero(), double tiny = 1e-9) {
    return {"", m, com, tiny * Mat3::Identity()};
}

inline JointSpec joint(JointKind kind, const Vec3& axis, const Vec3& xyz = Vec3::Zero(), const Vec3& rpy = Vec3::Zero()) {
    JointSpec j;
    j.kind = kind;
    j.axis = axis;
    j.origin_xyz = xyz;
    j.origin_rpy = rpy;
    return j;
}

inline void wire_parents(ChainModel& m) {
    for (std::size_t i = 0; i < m.joints.size(); ++i) {
        m.joints[i].parent = static_cast<int>(i) - 1;
        if (m.joints[i].name.empty()) m.joints[i].name = "j" + std::to_string(i + 1);
        if (m.links[i].name.empty()) m.links[i].name = "l" + std::to_string(i + 1);
    }
}

/// Cartesian x-y-z stage; the first two carriages weigh `carriage`, the last link
/// carries the rigid body `payload`. With carriage → tiny, J = E and M = m·E.
inline ChainModel gantry(const LinkInertia& payload, double carriage = 0.0, const Vec3& contact_offset = Vec3::Zero()) {
    ChainModel m;
    m.name = "gantry";
    // Carriages are negligible point masses unless asked otherwise.
    const double c = carriage > 0.0 ? carriage : 1e-12;
    m.links = {point_mass(c, Vec3::Zero(), 1e-15), point_mass(c, Vec3::Zero(), 1e-15), payload};
    m.joints = {joint(JointKind::prismatic, Vec3::UnitX()), joint(JointKind::prismatic, Vec3::UnitY()),
                joint(JointKind::prismatic, Vec3::UnitZ())};
    m.contact = {2, contact_offset};
    wire_parents(m);
    return m;
}

/// Uniform rod of mass m, length l along the link x-axis, centred at the origin.
inline LinkInertia rod(double m, double l) {
    const double t = m * l * l / 12.0;
    LinkInertia li;
    li.mass = m;
    li.com = Vec3::Zero();
    li.rot_inertia = Vec3(1e-9 * m, t, t).asDiagonal();
    return li;
}

/// Single revolute joint about z carrying a point mass m at distance l on x.
inline ChainModel pendulum(double m, double l) {
    ChainModel mm;
    mm.name = "pendulum";
    mm.links = {point_mass(m, Vec3(l, 0, 0))};
    mm.joints = {joint(JointKind::revolute, Vec3::UnitZ())};
    mm.contact = {0, Vec3(l, 0, 0)};
    wire_parents(mm);
    return mm;
}

/// Base yaw, shoulder pitch, elbow pitch; the last link is a uniform rod with the
/// contact at its tip. Non-singular for generic elbow angles.
inline ChainModel rod_arm3(double rod_mass = 1.0, double rod_length = 0.5) {
    ChainModel m;
    m.name = "rod_arm3";
    LinkInertia base{"base", 2.0, Vec3(0, 0, 0.1), Vec3(0.02, 0.02, 0.01).asDiagonal()};
    LinkInertia upper{"upper", 1.5, Vec3(0.2, 0, 0), Vec3(0.002, 0.02, 0.02).asDiagonal()};
    LinkInertia fore = rod(rod_mass, rod_length);
    fore.name = "rod";
    fore.com = Vec3(rod_length / 2, 0, 0);
    m.links = {base, upper, fore};
    m.joints = {joint(JointKind::revolute, Vec3::UnitZ()),
                joint(JointKind::revolute, Vec3::UnitY(), Vec3(0, 0, 0.3)),
                joint(JointKind::revolute, Vec3::UnitY(), Vec3(0.4, 0, 0))};
    m.contact = {2, Vec3(rod_length, 0, 0)};
    wire_parents(m);
    return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond qt(n(rng), n(rng), n(rng), n(rng));
    qt.normalize();
    return qt.toRotationMatrix();
}

inline Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v(n(rng), n(rng), n(rng));
    return v.normalized();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng), u(rng), u(rng)};
}

/// Rotational inertia from principal moments (y+z, x+z, x+y): always PD and
/// satisfies the triangle inequality.
inline Mat3 random_inertia(std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    const double x = u(rng) * scale, y = u(rng) * scale, z = u(rng) * scale;
    const Mat3 r = random_rotation(rng);
    return r * Vec3(y + z, x + z, x + y).asDiagonal() * r.transpose();
}

/// Random serial chain with D joints, revolute-heavy, contact on the last link.
inline ChainModel random_chain(std::mt19937_64& rng, int dof, double prismatic_share = 0.2) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> mass(0.3, 3.0);
    ChainModel m;
    m.name = "random" + std::to_string(dof);
    for (int i = 0; i < dof; ++i) {
        LinkInertia l;
        l.mass = mass(rng);
        l.com = random_vec(rng, 0.2);
        l.rot_inertia = random_inertia(rng, 0.01 * l.mass);
        m.links.push_back(l);
        JointSpec j;
        j.kind = u01(rng) < prismatic_share ? JointKind::prismatic : JointKind::revolute;
        j.axis = random_unit(rng);
        j.origin_xyz = random_vec(rng, 0.3);
        j.origin_rpy = random_vec(rng, std::numbers::pi);
        m.joints.push_back(j);
    }
    m.contact = {dof - 1, random_vec(rng, 0.2)};
    wire_parents(m);
    return m;
}

inline VecX random_q(std::mt19937_64& rng, int dof, double scale = std::numbers::pi) {
    std::uniform_real_distribution<double> u(-scale, scale);
    VecX q(dof);
    for (int i = 0; i < dof; ++i) q(i) = u(rng);
    return q;
}

}  // namespace impactjump::testing
