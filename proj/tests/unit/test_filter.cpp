#include "oracles.hpp"

#include "swarmchor/filter.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>

using namespace swarmchor;

namespace {

struct Replay {
    CertifiedPerformance perf;
    /// plans[k][n]: the plan committed at step k
    std::vector<std::vector<DronePlan>> plans;
};

/// runFilter's loop, keeping every committed plan.
Replay replay(const ReferenceSet& refs, const FilterContext& ctx) {
    Replay r;
    std::vector<DroneState> states;
    for (int n = 0; n < refs.drones(); ++n) states.push_back(DroneState::hoverAt(refs.at(n, 0)));
    std::vector<DronePlan> plans = initialPlans(refs);
    r.perf.positions.assign(states.size(), {});
    for (int k = 0; k < refs.steps(); ++k) {
        SwarmStep step = stepSwarm(states, refs, plans, k, ctx);
        for (std::size_t n = 0; n < states.size(); ++n) {
            r.perf.positions[n].push_back(states[n].p);
            states[n] = ctx.model().step(states[n], step.inputs[n]);
        }
        r.perf.diagnostics.push_back(step.diagnostics);
        plans = step.plans;
        r.plans.push_back(plans);
    }
    return r;
}

ReferenceSet headOn() {
    return oracle::compile("drones 2\n"
                           "waypoint 0 drone 0 -> (-1, 0, 1.5)\nwaypoint 0 drone 1 -> (1, 0, 1.5)\n"
                           "waypoint 4 drone 0 -> (1, 0, 1.5)\nwaypoint 4 drone 1 -> (-1, 0, 1.5)\n"
                           "waypoint 6 drone 0 -> (1, 0, 1.5)\nwaypoint 6 drone 1 -> (-1, 0, 1.5)\n",
                           oracle::beatsEvery(1.0, 6.0));
}

const ClosedLoopModel& model() {
    static const ClosedLoopModel m = discretizeModel(10, 5, 0.1);
    return m;
}

}  // namespace

TEST(Bernstein, SymmetricQuadraticRow) {
    const Eigen::RowVectorXd r = bernsteinRow(2, 0.5);
    EXPECT_NEAR(r(0), 0.25, 1e-15);
    EXPECT_NEAR(r(1), 0.5, 1e-15);
    EXPECT_NEAR(r(2), 0.25, 1e-15);
}

TEST(Bernstein, EndpointsAndPartitionOfUnity) {
    for (int n = 1; n <= 10; ++n) {
        const BernsteinBasis b = buildBasis(n, 15, 0.1);
        const Eigen::MatrixXd& W0 = b.W[0];
        EXPECT_EQ(W0.row(0), Eigen::RowVectorXd::Unit(n + 1, 0));
        EXPECT_EQ(W0.row(W0.rows() - 1), Eigen::RowVectorXd::Unit(n + 1, n));
        for (Eigen::Index i = 0; i < W0.rows(); ++i) {
            EXPECT_NEAR(W0.row(i).sum(), 1.0, 1e-12);
            EXPECT_GE(W0.row(i).minCoeff(), 0.0);
        }
    }
}

TEST(Bernstein, DerivativeOperatorComposition) {
    for (int n = 1; n <= 9; ++n) {
        const Eigen::MatrixXd D = bernsteinDerivativeOperator(n);
        for (double tau : {0.0, 0.3, 0.77, 1.0}) {
            const Eigen::RowVectorXd lhs = bernsteinRow(n, tau, 1);
            const Eigen::RowVectorXd rhs = bernsteinRow(n - 1, tau, 0) * D;
            EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Bernstein, MatchesDeCasteljau) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    std::vector<double> c(9);
    for (double& v : c) v = g(rng);
    const Eigen::Map<const Eigen::VectorXd> cv(c.data(), 9);
    for (double tau = 0.0; tau <= 1.0; tau += 0.05) EXPECT_NEAR(bernsteinRow(8, tau) * cv, oracle::deCasteljau(c, tau), 1e-12);
    for (int d = 0; d <= 3; ++d) EXPECT_NEAR(bernsteinRow(8, 0.0, d) * cv, oracle::bernsteinDerivativeAtZero(c, d), 1e-9);
}

TEST(Bernstein, ShiftReanchorsPolynomial) {
    const BernsteinBasis b = buildBasis(8, 15, 0.1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Eigen::MatrixXd c(9, 3);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
    const Eigen::MatrixXd s = shiftCoefficients(b, c, 3);
    for (double tau : {0.0, 0.2, 0.5}) {
        for (int d = 0; d <= 2; ++d) {
            const double shifted = tau + 3.0 / 14.0;
            EXPECT_LT((b.row(tau, d) * s - b.row(shifted, d) * c).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(Rollout, HoverEquilibrium) {
    const RolloutOperators r = rolloutOperators(model(), 15);
    Vec6 x;
    x << 0.5, -1.0, 2.0, 0, 0, 0;
    Eigen::VectorXd u(45);
    for (int i = 0; i < 15; ++i) u.segment<3>(3 * i) = Vec3(0.5, -1.0, 2.0);
    const Eigen::VectorXd p = r.P_x * x + r.P_u * u;
    for (int i = 0; i < 15; ++i) EXPECT_LT((p.segment<3>(3 * i) - Vec3(0.5, -1.0, 2.0)).norm(), 1e-12);
}

TEST(Rollout, SingleStepIsOneApplication) {
    const RolloutOperators r = rolloutOperators(model(), 1);
    EXPECT_LT((r.P_x - model().A.topRows<3>()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((r.P_u - model().B.topRows<3>()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rollout, MatchesIterationAndSuperposes) {
    const int K = 12;
    const RolloutOperators r = rolloutOperators(model(), K);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    auto randomCase = [&] {
        Vec6 x;
        for (int i = 0; i < 6; ++i) x(i) = g(rng);
        Eigen::VectorXd u(3 * K);
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = g(rng);
        return std::pair{x, u};
    };
    const auto [x1, u1] = randomCase();
    const auto [x2, u2] = randomCase();
    Vec6 x = x1;
    const Eigen::VectorXd p = r.P_x * x1 + r.P_u * u1;
    for (int i = 0; i < K; ++i) {
        x = model().step(x, Vec3(u1.segment<3>(3 * i)));
        EXPECT_LT((p.segment<3>(3 * i) - x.head<3>()).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Eigen::VectorXd a = r.P_x * x1 + r.P_u * u1, b = r.P_x * x2 + r.P_u * u2;
    const Eigen::VectorXd ab = r.P_x * (2.0 * x1 - 3.0 * x2) + r.P_u * (2.0 * u1 - 3.0 * u2);
    EXPECT_LT((ab - (2.0 * a - 3.0 * b)).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, ab.cwiseAbs().maxCoeff()));
}

TEST(FilterConfig, RejectsBrokenInvariants) {
    FilterConfig c;
    EXPECT_NO_THROW(c.validate());
    c.K = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.alpha = c.beta = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.d_cont = c.degree;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.tol_residual = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SolveDroneStep, UnreachablePinFlagsNonConvergence) {
    const FilterContext ctx(model(), PhysicalLimits{}, FilterConfig{});
    DroneProblem pb;
    pb.state = DroneState::hoverAt(Vec3(-2, 0, 1.5));
    for (int i = 1; i <= 15; ++i) pb.reference.push_back(i >= 2 ? Vec3(3, 0, 1.5) : Vec3(-2, 0, 1.5));
    pb.pins = {2};
    const DroneSolution sol = solveDroneStep(pb, ctx);
    EXPECT_FALSE(sol.diagnostics.converged);
    EXPECT_GT(sol.diagnostics.res_velocity, ctx.config().tol_residual);
    for (double r : {sol.diagnostics.res_collision, sol.diagnostics.res_thrust, sol.diagnostics.res_velocity,
                     sol.diagnostics.res_position, sol.diagnostics.res_fixed}) {
        EXPECT_GE(r, 0.0);
    }
}

TEST(SolveDroneStep, SafeReferenceIsTrackedClosely) {
    // rest-to-rest moves; an abrupt start would need a velocity jump no filter can track
    const ReferenceSet refs = oracle::compile("primitive line_sweep from 0 to 6 {distance=1.5, heading=0.7} layout=circle(1,1.0)\n"
                                              "primitive ascend_descend from 6 to 10 {height_change=0.8}\n",
                                              oracle::beatsEvery(1.0, 10.0));
    const CertifiedPerformance perf = runFilter(refs, model(), PhysicalLimits{}, FilterConfig{});
    double worst = 0.0;
    for (int k = 0; k < perf.steps(); ++k) worst = std::max(worst, (perf.positions[0][k] - refs.at(0, k)).norm());
    EXPECT_LT(worst, 0.02);
    EXPECT_EQ(perf.nonConverged(), 0);
}

TEST(SolveDroneStep, HeadOnPairStaysSeparated) {
    const ReferenceSet refs = headOn();
    const PhysicalLimits limits;
    EXPECT_LT(oracle::minEllipsoid(refs.positions, limits), 0.5);
    const CertifiedPerformance perf = runFilter(refs, model(), limits, FilterConfig{});
    EXPECT_EQ(perf.nonConverged(), 0);
    const double m = oracle::minEllipsoid(perf.positions, limits);
    EXPECT_GE(m * m, 1.0 - 1e-3);
}

TEST(StepSwarm, SingleDroneMatchesDirectSolve) {
    const ReferenceSet refs = oracle::compile("primitive wave from 0 to 4 {amplitude=0.3} layout=grid(1,1,1.0)",
                                              oracle::beatsEvery(1.0, 4.0));
    const FilterContext ctx(model(), PhysicalLimits{}, FilterConfig{});
    const std::vector<DroneState> states{DroneState::hoverAt(refs.at(0, 0) + Vec3(0.05, 0, 0))};
    const SwarmStep step = stepSwarm(states, refs, initialPlans(refs), 3, ctx);
    DroneProblem pb;
    pb.state = states[0];
    for (int i = 1; i <= 15; ++i) {
        pb.reference.push_back(refs.at(0, std::min(3 + i, refs.steps() - 1)));
        if (3 + i < refs.steps() && refs.isPinned(3 + i)) pb.pins.push_back(i);
    }
    const DroneSolution sol = solveDroneStep(pb, ctx);
    EXPECT_EQ(step.inputs[0], sol.certifiedInput());
    EXPECT_EQ(step.plans[0].coefficients, sol.coefficients);
}

TEST(StepSwarm, SolveOrderDoesNotMatter) {
    const ReferenceSet refs = oracle::compile(oracle::counterRotatingScore(8, 2.0, 2, 3.0, 2), oracle::beatsEvery(0.5, 6.0));
    FilterConfig serial, parallel;
    serial.threads = 1;
    parallel.threads = 4;
    const CertifiedPerformance a = runFilter(refs, model(), PhysicalLimits{}, serial);
    const CertifiedPerformance b = runFilter(refs, model(), PhysicalLimits{}, parallel);
    ASSERT_EQ(a.inputs, b.inputs);
    ASSERT_EQ(a.positions, b.positions);

    // Reversing the drone indices permutes the outputs.
    ReferenceSet rev = refs;
    std::reverse(rev.positions.begin(), rev.positions.end());
    const CertifiedPerformance c = runFilter(rev, model(), PhysicalLimits{}, serial);
    for (int n = 0; n < refs.drones(); ++n) {
        for (int k = 0; k < refs.steps(); ++k) {
            ASSERT_LT((c.inputs[static_cast<std::size_t>(refs.drones() - 1 - n)][k] - a.inputs[n][k]).norm(), 1e-9);
        }
    }
}

TEST(RunFilter, TenDroneCircleCrossingIsCollisionFree) {
    const ReferenceSet refs = oracle::compile(oracle::counterRotatingScore(10, 2.5, 3, 5.0, 3), oracle::beatsEvery(0.5, 15.0));
    const PhysicalLimits limits;
    const CertifiedPerformance perf = runFilter(refs, model(), limits, FilterConfig{});
    EXPECT_LT(oracle::minEllipsoid(refs.positions, limits), 1.0);
    EXPECT_EQ(perf.nonConverged(), 0);
    const double m = oracle::minEllipsoid(perf.positions, limits);
    EXPECT_GE(m * m, 1.0 - 1e-3);
}

TEST(RunFilter, HelixToSpiralTransition) {
    const ReferenceSet refs = oracle::compile(
        "primitive helix from 0 to 6 {angular_displacement=3.14159, climb=0.5} layout=circle(12,2.0)\n"
        "primitive spiral from 6 to 12 {angular_displacement=-3.14159, radius_growth=-0.5}\n",
        oracle::beatsEvery(1.0, 12.0));
    const PhysicalLimits limits;
    const FilterContext ctx(model(), limits, FilterConfig{});
    const Replay r = replay(refs, ctx);
    const double m = oracle::minEllipsoid(r.perf.positions, limits);
    EXPECT_GE(m * m, 1.0 - 1e-3);

    // u and its first d_cont derivatives carry over between consecutive plans.
    double jump = 0.0;
    for (std::size_t k = 1; k < r.plans.size(); ++k) {
        for (std::size_t n = 0; n < r.plans[k].size(); ++n) {
            if (!r.perf.diagnostics[k][n].converged || r.perf.diagnostics[k][n].pin_conflict) continue;
            const Eigen::MatrixXd prev = shiftCoefficients(ctx.basis(), r.plans[k - 1][n].coefficients, 1);
            for (int d = 0; d <= ctx.config().d_cont; ++d) {
                jump = std::max(jump, (ctx.basis().row(0.0, d) * (prev - r.plans[k][n].coefficients)).cwiseAbs().maxCoeff());
            }
        }
    }
    EXPECT_LT(jump, 1e-6);
}

TEST(RunFilter, ConvergedInvariants) {
    const ReferenceSet refs = oracle::compile(oracle::counterRotatingScore(6, 2.0, 2, 3.0, 3), oracle::beatsEvery(0.5, 9.0));
    const PhysicalLimits limits;
    const FilterConfig cfg;
    const CertifiedPerformance perf = runFilter(refs, model(), limits, cfg);
    for (const auto& pin : perf.pin_records) {
        if (pin.converged) EXPECT_LE(pin.error, 1e-4);
    }
    for (int k = 0; k < perf.steps(); ++k) {
        for (int n = 0; n < perf.drones(); ++n) {
            const StepDiagnostics& d = perf.diagnostics[k][n];
            if (!d.converged) continue;
            const auto& h = d.residual_history;
            for (std::size_t i = h.size() >= 6 ? h.size() - 5 : 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]);
            EXPECT_TRUE(limits.insideArena(perf.positions[n][k], cfg.tol_residual));
            EXPECT_LE(perf.velocities[n][k].norm(), limits.v_max + cfg.tol_residual);
        }
    }
}

TEST(RunFilter, CsvAndDiagnostics) {
    const ReferenceSet refs = headOn();
    const CertifiedPerformance perf = runFilter(refs, model(), PhysicalLimits{}, FilterConfig{});
    const auto path = std::filesystem::temp_directory_path() / "swarmchor_certified.csv";
    writeCertifiedCsv(path, perf);
    const CertifiedPerformance back = readCertifiedCsv(path);
    ASSERT_EQ(back.steps(), perf.steps());
    for (int n = 0; n < 2; ++n) {
        for (int k = 0; k < perf.steps(); ++k) {
            ASSERT_LT((back.positions[n][k] - perf.positions[n][k]).norm(), 1e-9);
            ASSERT_LT((back.inputs[n][k] - perf.inputs[n][k]).norm(), 1e-9);
        }
    }
    const nlohmann::json diag = diagnosticsToJson(perf, refs, PhysicalLimits{});
    EXPECT_EQ(diag["summary"]["non_converged"], 0);
    EXPECT_EQ(diag["summary"]["ellipsoid_violation_steps"], 0);
    EXPECT_EQ(diag.dump().find("solve_ms"), std::string::npos);
    EXPECT_EQ(timingsToJson(perf)["solve_ms"].size(), static_cast<std::size_t>(perf.steps()));
}
