#include "oracles.hpp"

#include "swarmchor/core.hpp"

#include <gtest/gtest.h>

using namespace swarmchor;

TEST(ClosedLoopModel, HoverIsFixedPoint) {
    const auto m = discretizeModel(10, 5, 0.1);
    DroneState x = DroneState::hoverAt(Vec3(0.3, -1.2, 1.7));
    for (int k = 0; k < 500; ++k) x = m.step(x, Vec3(0.3, -1.2, 1.7));
    EXPECT_LT((x.p - Vec3(0.3, -1.2, 1.7)).norm(), 1e-12);
    EXPECT_LT(x.v.norm(), 1e-12);
}

TEST(ClosedLoopModel, SmallStepApproachesIdentity) {
    const auto m = discretizeModel(10, 5, 1e-7);
    EXPECT_LT((m.A - Mat6::Identity()).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT(m.B.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ClosedLoopModel, MatchesFineGridIntegration) {
    const auto m = discretizeModel(10, 5, 0.1);
    const std::vector<double> u(20, 1.0);
    const auto ref = oracle::integrateAxis(10, 5, 0.1, 0.0, 0.0, u);
    DroneState x;
    double worst = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        x = m.step(x, Vec3::Constant(1.0));
        for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(x.p(a) - ref[k + 1]));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(ClosedLoopModel, AxesAreDecoupled) {
    const auto m = discretizeModel(7, 3, 0.05);
    const DroneState x{Vec3(1, 2, 3), Vec3(-0.5, 0.1, 0.2)};
    const Vec3 u(0.4, -0.3, 2.0);
    const DroneState y = m.step(x, u);
    for (int a = 0; a < 3; ++a) {
        const Eigen::Vector2d ax = m.axis_A * Eigen::Vector2d(x.p(a), x.v(a)) + m.axis_B * u(a);
        EXPECT_NEAR(y.p(a), ax(0), 1e-14);
        EXPECT_NEAR(y.v(a), ax(1), 1e-14);
    }
}

TEST(ClosedLoopModel, StableAndBounded) {
    const auto m = discretizeModel(10, 5, 0.1);
    EXPECT_LT(m.spectralRadius(), 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    DroneState x;
    double peak = 0.0;
    for (int k = 0; k < 200; ++k) {
        x = m.step(x, Vec3(U(rng), U(rng), U(rng)));
        peak = std::max(peak, x.p.cwiseAbs().maxCoeff());
    }
    EXPECT_LT(peak, 2.0);
}

TEST(ClosedLoopModel, StackedAndStructuredStepsAgree) {
    const auto m = discretizeModel(10, 5, 0.1);
    const DroneState x{Vec3(1, 2, 3), Vec3(0.1, 0.2, 0.3)};
    const Vec3 u(0, 1, 2);
    const DroneState a = m.step(x, u);
    const DroneState b = DroneState::fromStacked(m.step(x.stacked(), u));
    EXPECT_LT((a.p - b.p).norm() + (a.v - b.v).norm(), 1e-14);
}

TEST(PhysicalLimits, DefaultsValidate) { EXPECT_NO_THROW(PhysicalLimits{}.validate()); }

TEST(PhysicalLimits, RejectsBrokenInvariants) {
    PhysicalLimits l;
    l.p_lo.x() = 5.0;
    EXPECT_THROW(l.validate(), std::invalid_argument);
    l = {};
    l.f_lo = 10.0;
    EXPECT_THROW(l.validate(), std::invalid_argument);
    l = {};
    l.ellipsoid_radii = Vec3(0.3, 0.3, 0.2);
    EXPECT_THROW(l.validate(), std::invalid_argument);
    l = {};
    l.v_max = 0.0;
    EXPECT_THROW(l.validate(), std::invalid_argument);
}

TEST(PhysicalLimits, EllipsoidDistanceScalesAxes) {
    const PhysicalLimits l;
    EXPECT_NEAR(l.ellipsoidDistance(Vec3(0, 0, 1), Vec3(0.25, 0, 1)), 1.0, 1e-15);
    EXPECT_NEAR(l.ellipsoidDistance(Vec3(0, 0, 1), Vec3(0, 0, 2.2)), 2.0, 1e-12);
    EXPECT_TRUE(l.insideArena(Vec3(0, 0, 1)));
    EXPECT_FALSE(l.insideArena(Vec3(0, 0, 0.1)));
}
