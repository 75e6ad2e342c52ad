#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "impactjump/dynamics.hpp"
#include "support/fixtures.hpp"

using namespace impactjump;
using namespace impactjump::testing;

namespace {

ChainModel arm7() { return load_model_file(std::string(IMPACTJUMP_SOURCE_DIR) + "/models/arm7.model"); }

// Homogeneous matrix of a rotation about a unit axis by Rodrigues' formula.
Eigen::Matrix4d rodrigues(const Vec3& axis, double angle) {
    const Mat3 k = skew(axis);
    Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
    h.topLeftCorner<3, 3>() = Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
    return h;
}

Eigen::Matrix4d naive_contact_pose(const ChainModel& m, const VecX& q) {
    Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
    for (int i = 0; i < m.dof(); ++i) {
        const JointSpec& j = m.joints[static_cast<std::size_t>(i)];
        Eigen::Matrix4d origin = Eigen::Matrix4d::Identity();
        origin.topLeftCorner<3, 3>() = rodrigues(Vec3::UnitX(), j.origin_rpy.x()).topLeftCorner<3, 3>() *
                                       rodrigues(Vec3::UnitY(), j.origin_rpy.y()).topLeftCorner<3, 3>() *
                                       rodrigues(Vec3::UnitZ(), j.origin_rpy.z()).topLeftCorner<3, 3>();
        origin.topRightCorner<3, 1>() = j.origin_xyz;
        Eigen::Matrix4d motion = Eigen::Matrix4d::Identity();
        if (j.kind == JointKind::revolute) {
            motion = rodrigues(j.axis, q(i));
        } else {
            motion.topRightCorner<3, 1>() = q(i) * j.axis;
        }
        h = h * origin * motion;
        if (i == m.contact.link) break;
    }
    Eigen::Matrix4d off = Eigen::Matrix4d::Identity();
    off.topRightCorner<3, 1>() = m.contact.offset;
    return h * off;
}

// Per-body kinetic energy from joint-by-joint velocity superposition.
double kinetic_energy_oracle(const ChainModel& m, const VecX& q, const VecX& qd) {
    const Kinematics k = forward_kinematics(m, q);
    double e = 0.0;
    for (int b = 0; b < m.dof(); ++b) {
        const auto sb = static_cast<std::size_t>(b);
        const Vec3 c = k.links[sb].apply(m.links[sb].com);
        Vec3 w = Vec3::Zero(), v = Vec3::Zero();
        for (int i = 0; i <= b; ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (m.joints[si].kind == JointKind::revolute) {
                w += k.joint_axes[si] * qd(i);
                v += k.joint_axes[si].cross(c - k.joint_points[si]) * qd(i);
            } else {
                v += k.joint_axes[si] * qd(i);
            }
        }
        const Mat3& r = k.links[sb].rotation();
        e += 0.5 * m.links[sb].mass * v.squaredNorm() + 0.5 * w.dot(r * m.links[sb].rot_inertia * r.transpose() * w);
    }
    return e;
}

}  // namespace

TEST(ForwardKinematics, ZeroConfigurationIsProductOfOrigins) {
    std::mt19937_64 rng(21);
    const ChainModel m = random_chain(rng, 5);
    const Kinematics k = forward_kinematics(m, VecX::Zero(5));
    Transform expected;
    for (int i = 0; i < 5; ++i) {
        expected = expected * m.joints[static_cast<std::size_t>(i)].origin();
        EXPECT_LE((k.links[static_cast<std::size_t>(i)].homogeneous() - expected.homogeneous()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(ForwardKinematics, QuarterTurn) {
    const ChainModel m = pendulum(1.0, 0.7);
    VecX q(1);
    q << std::numbers::pi / 2;
    const Vec3 p = forward_kinematics(m, q).contact.translation();
    EXPECT_LE((p - Vec3(0, 0.7, 0)).norm(), 1e-15);
}

TEST(ForwardKinematics, MatchesNaiveMatrixChain) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d);
        const Vec3 p = forward_kinematics(m, q).contact.translation();
        EXPECT_LE((p - naive_contact_pose(m, q).topRightCorner<3, 1>()).norm(), 1e-12);
    }
}

TEST(ForwardKinematics, DimensionMismatch) {
    EXPECT_THROW(forward_kinematics(rod_arm3(), VecX::Zero(2)), DimensionError);
}

TEST(PointJacobian, GantryIsIdentity) {
    const ChainModel m = gantry(point_mass(2.0), 0.0, Vec3(0.1, 0.2, 0.3));
    EXPECT_TRUE(point_jacobian_linear(m, Vec3(0.3, -0.2, 0.5)).isApprox(MatX(Mat3::Identity()), 1e-15));
}

TEST(PointJacobian, PlanarLeverArm) {
    const ChainModel m = pendulum(1.0, 0.8);
    const Mat3X j = point_jacobian_linear(m, VecX::Zero(1));
    EXPECT_LE((j.col(0) - Vec3(0, 0.8, 0)).norm(), 1e-15);
}

TEST(PointJacobian, MatchesCentralDifferences) {
    std::mt19937_64 rng(23);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d);
        const Mat3X j = point_jacobian_linear(m, q);
        for (int i = 0; i < d; ++i) {
            VecX qp = q, qm = q;
            qp(i) += h;
            qm(i) -= h;
            const Vec3 fd = (forward_kinematics(m, qp).contact.translation() -
                             forward_kinematics(m, qm).contact.translation()) / (2 * h);
            EXPECT_LE((j.col(i) - fd).cwiseAbs().maxCoeff(), 1e-6);
        }
    }
}

TEST(Jsim, PendulumPointMass) {
    const double mass = 2.5, l = 0.6;
    const Jsim m = jsim(pendulum(mass, l), VecX::Zero(1));
    EXPECT_NEAR(m.matrix()(0, 0), mass * l * l, 1e-8);
    EXPECT_DOUBLE_EQ(m.condition_number(), 1.0);
}

TEST(Jsim, KineticEnergyIdentity) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d), qd = random_q(rng, d, 2.0);
        const double e = 0.5 * qd.dot(jsim(m, q).matrix() * qd);
        const double oracle = kinetic_energy_oracle(m, q, qd);
        EXPECT_LE(std::abs(e - oracle), 1e-10 * oracle);
    }
}

TEST(Jsim, SymmetricPositiveDefiniteSweep) {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const MatX mm = jsim(m, random_q(rng, d)).matrix();
        EXPECT_LE((mm - mm.transpose()).cwiseAbs().maxCoeff(), 1e-10 * mm.norm());
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(mm).eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Jsim, Arm7ConditionNumberOrder) {
    const ChainModel m = arm7();
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 100; ++trial) {
        const double kappa = jsim(m, random_q(rng, 7)).condition_number();
        EXPECT_GE(kappa, 1e2);
        EXPECT_LE(kappa, 1e5);
    }
}

TEST(ConditionNumber, Diagonal) {
    EXPECT_DOUBLE_EQ(condition_number(Eigen::Vector2d(1.0, 4.0).asDiagonal().toDenseMatrix()), 4.0);
}

TEST(CentroidalInertia, SingleLink) {
    ChainModel m = pendulum(2.0, 0.5);
    m.links[0].rot_inertia = Vec3(0.01, 0.02, 0.03).asDiagonal();
    VecX q(1);
    q << 0.4;
    const CentroidalInertia c = centroidal_inertia(m, q);
    const Mat3 r = Eigen::AngleAxisd(0.4, Vec3::UnitZ()).toRotationMatrix();
    EXPECT_DOUBLE_EQ(c.mass, 2.0);
    EXPECT_LE((c.com - r * Vec3(0.5, 0, 0)).norm(), 1e-15);
    EXPECT_LE((c.rot_inertia - r * m.links[0].rot_inertia * r.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CentroidalInertia, Dumbbell) {
    const double mass = 1.5, a = 0.4;
    ChainModel m;
    m.links = {point_mass(mass, Vec3(a, 0, 0), 1e-12), point_mass(mass, Vec3(-a, 0, 0), 1e-12)};
    m.joints = {joint(JointKind::revolute, Vec3::UnitZ()), joint(JointKind::revolute, Vec3::UnitZ())};
    m.contact = {1, Vec3::Zero()};
    wire_parents(m);
    const CentroidalInertia c = centroidal_inertia(m, VecX::Zero(2));
    EXPECT_LE(c.com.norm(), 1e-15);
    EXPECT_NEAR(c.rot_inertia(2, 2), 2 * mass * a * a, 1e-11);
}

TEST(CentroidalInertia, AngularMomentumOracle) {
    std::mt19937_64 rng(27);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d);
        const Kinematics k = forward_kinematics(m, q);
        const CentroidalInertia c = centroidal_inertia(m, k);
        double mass = 0.0;
        for (const auto& l : m.links) mass += l.mass;
        EXPECT_EQ(c.mass, mass);
        // Rigid rotation ω about the COM: L = Σ R I Rᵀ ω + m r × (ω × r).
        const Vec3 omega = random_vec(rng);
        Vec3 l = Vec3::Zero();
        for (int i = 0; i < d; ++i) {
            const auto s = static_cast<std::size_t>(i);
            const Mat3& r = k.links[s].rotation();
            const Vec3 rc = k.links[s].apply(m.links[s].com) - c.com;
            l += r * m.links[s].rot_inertia * r.transpose() * omega + m.links[s].mass * rc.cross(omega.cross(rc));
        }
        EXPECT_LE((c.rot_inertia * omega - l).norm(), 1e-10 * std::max(1.0, l.norm()));
    }
}

// Oracle: express blockdiag(mE, 𝓘) at the contact frame, invert the 6×6, read the corner.
static Mat3 iim_corner_oracle(const CentroidalInertia& c, const Vec3& point, const Mat3& to_contact) {
    const Transform g_cp(to_contact.transpose(), point - c.com);
    const Mat6 ad = adjoint_twist(g_cp);
    const Mat6 inertia_at_contact = ad.transpose() * c.spatial() * ad;
    return inertia_at_contact.inverse().topLeftCorner<3, 3>();
}

TEST(IimCrb, ContactAtComIsInverseMass) {
    ChainModel m = pendulum(3.0, 0.5);
    m.links[0].rot_inertia = Vec3(0.01, 0.02, 0.03).asDiagonal();
    const Iim w = iim_crb(m, VecX::Zero(1));
    EXPECT_LE((w.matrix - Mat3::Identity() / 3.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(IimCrb, RodTipEffectiveMass) {
    ChainModel m = pendulum(1.0, 0.0);
    m.links[0] = rod(1.0, 1.0);
    m.contact.offset = Vec3(0.5, 0, 0);
    const Iim w = iim_crb(m, VecX::Zero(1));
    EXPECT_NEAR(w.matrix(2, 2), 4.0, 1e-9);
    EXPECT_NEAR(w.matrix(1, 1), 4.0, 1e-9);
    const CentroidalInertia c = centroidal_inertia(m, VecX::Zero(1));
    EXPECT_NEAR(iim_corner_oracle(c, Vec3(0.5, 0, 0), Mat3::Identity())(2, 2), 4.0, 1e-9);
}

TEST(IimCrb, ClosedFormMatchesAdjointCorner) {
    std::mt19937_64 rng(28);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d);
        const Mat3 rot = random_rotation(rng);
        const Kinematics k = forward_kinematics(m, q);
        const Iim w = iim_crb(m, q, rot);
        const Mat3 oracle = iim_corner_oracle(centroidal_inertia(m, k), k.contact.translation(), rot);
        EXPECT_LE((w.matrix - oracle).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((w.matrix - w.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-10 * w.matrix.norm());
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat3>(w.matrix).eigenvalues().minCoeff(), 0.0);
    }
}

// Independent route: sum every link's spatial inertia at the contact point.
TEST(IimCrb, MatchesSumOfLinkInertiasAtContact) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 3 + trial % 5;
        const ChainModel m = random_chain(rng, d);
        const VecX q = random_q(rng, d);
        const Kinematics k = forward_kinematics(m, q);
        const Vec3 p = k.contact.translation();
        Mat6 total = Mat6::Zero();
        for (int i = 0; i < d; ++i) {
            const auto s = static_cast<std::size_t>(i);
            const Mat3& r = k.links[s].rotation();
            total += spatial_inertia(m.links[s].mass, k.links[s].apply(m.links[s].com) - p,
                                     r * m.links[s].rot_inertia * r.transpose());
        }
        const Mat3 oracle = total.inverse().topLeftCorner<3, 3>();
        EXPECT_LE((iim_crb(m, q).matrix - oracle).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(IimGm, GantryIsInverseMass) {
    const ChainModel m = gantry(LinkInertia{"p", 2.0, Vec3::Zero(), Vec3(0.1, 0.2, 0.15).asDiagonal()}, 0.0,
                                Vec3(0.3, 0.1, -0.2));
    const Iim w = iim_gm(m, Vec3(0.1, 0.2, 0.3));
    EXPECT_LE((w.matrix - Mat3::Identity() / 2.0).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_FALSE(w.rank_deficient);
}

TEST(IimGm, PendulumIsRankDeficient) {
    const Iim w = iim_gm(pendulum(1.0, 0.5), VecX::Zero(1));
    EXPECT_TRUE(w.rank_deficient);
}

TEST(IimGm, MatchesColumnwiseLinearSolve) {
    std::mt19937_64 rng(30);
    for (int trial = 0; trial < 50; ++trial) {
        const ChainModel m = random_chain(rng, 7);
        const VecX q = random_q(rng, 7);
        const Mat3X j = point_jacobian_linear(m, q);
        const MatX mm = jsim(m, q).matrix();
        Eigen::ColPivHouseholderQR<MatX> qr(mm);
        Mat3 oracle;
        for (int c = 0; c < 3; ++c) oracle.col(c) = j * qr.solve(VecX(j.row(c).transpose()));
        EXPECT_LE((iim_gm(m, q).matrix - oracle).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Dynamics, UniformMassScaling) {
    std::mt19937_64 rng(31);
    for (double s : {1e-2, 3.0, 1e2}) {
        const ChainModel m = random_chain(rng, 6);
        const ChainModel ms = scale_inertia(m, s);
        const VecX q = random_q(rng, 6);
        const MatX a = jsim(m, q).matrix(), b = jsim(ms, q).matrix();
        EXPECT_LE((b - s * a).norm(), 1e-10 * (s * a).norm());
        const Mat3 wc = iim_crb(m, q).matrix, wcs = iim_crb(ms, q).matrix;
        EXPECT_LE((wcs - wc / s).norm(), 1e-10 * (wc / s).norm());
        const Mat3 wg = iim_gm(m, q).matrix, wgs = iim_gm(ms, q).matrix;
        EXPECT_LE((wgs - wg / s).norm(), 1e-10 * (wg / s).norm());
    }
}
