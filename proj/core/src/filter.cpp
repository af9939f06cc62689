#include "swarmchor/filter.hpp"

#include <nlohmann/json.hpp>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace swarmchor {

void FilterConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("filter config: " + what); };
    if (degree < 3) fail("degree must be at least 3");
    if (K < 2) fail("K must be at least 2");
    if (alpha < 0.0 || beta < 0.0) fail("alpha and beta must be non-negative");
    if (alpha == 0.0 && beta == 0.0) fail("alpha and beta cannot both be zero");
    if (gamma < 0.0) fail("gamma must be non-negative");
    if (d_cost < 0 || d_cost > 3) fail("d_cost must be in 0..3");
    if (d_cont < 0 || d_cont > 3 || d_cont > degree - 1) fail("d_cont must be in 0..min(3, degree - 1)");
    if (!(rho0 > 0.0)) fail("rho0 must be positive");
    if (!(rho_growth >= 1.0)) fail("rho_growth must be at least 1");
    if (max_am_iters < 0) fail("max_am_iters must be non-negative");
    if (!(tol_residual > 0.0)) fail("tol_residual must be positive");
    if (!(neighbor_radius > 0.0)) fail("neighbor_radius must be positive");
    if (!(collision_margin >= 0.0)) fail("collision_margin must be non-negative");
    if (!(lateral_bias >= 0.0)) fail("lateral_bias must be non-negative");
    if (threads < 0) fail("threads must be non-negative");
}

Vec3 Prediction::at(int k) const {
    if (positions.empty()) return Vec3::Zero();
    const int n = static_cast<int>(positions.size());
    const int i = k - start;
    if (n == 1) return positions.front();
    if (i < 0) return positions[0] + double(i) * (positions[1] - positions[0]);
    if (i >= n) return positions[n - 1] + double(i - n + 1) * (positions[n - 1] - positions[n - 2]);
    return positions[static_cast<std::size_t>(i)];
}

double StepDiagnostics::maxResidual() const {
    return std::max({res_collision, res_thrust, res_velocity, res_position});
}

FilterContext::FilterContext(const ClosedLoopModel& model, const PhysicalLimits& limits, const FilterConfig& config)
    : model_(model), limits_(limits), config_(config) {
    config_.validate();
    limits_.validate();
    basis_ = buildBasis(config_.degree, config_.K, model_.dt);
    rollout_ = rolloutOperators(model_, config_.K);

    const int K = config_.K;
    const int n1 = basis_.coefficients();
    const Eigen::MatrixXd& W0 = basis_.W[0];

    L_[Position] = rollout_.axis_Pu * W0;
    X_[Position] = rollout_.axis_Px;
    L_[Velocity] = rollout_.axis_Vu * W0;
    X_[Velocity] = rollout_.axis_Vx;

    // p and v at steps 0..K-1; step 0 is the current state.
    Eigen::MatrixXd Lps = Eigen::MatrixXd::Zero(K, n1), Lvs = Eigen::MatrixXd::Zero(K, n1);
    Eigen::MatrixXd Xps = Eigen::MatrixXd::Zero(K, 2), Xvs = Eigen::MatrixXd::Zero(K, 2);
    Xps(0, 0) = 1.0;
    Xvs(0, 1) = 1.0;
    Lps.bottomRows(K - 1) = L_[Position].topRows(K - 1);
    Lvs.bottomRows(K - 1) = L_[Velocity].topRows(K - 1);
    Xps.bottomRows(K - 1) = X_[Position].topRows(K - 1);
    Xvs.bottomRows(K - 1) = X_[Velocity].topRows(K - 1);

    const double kp = model_.k_p, kd = model_.k_d;
    L_[Acceleration] = kp * (W0 - Lps) - kd * Lvs;
    X_[Acceleration] = -kp * Xps - kd * Xvs;
    L_[Jerk] = kp * (basis_.W[1] - Lvs) - kd * L_[Acceleration];
    X_[Jerk] = -kp * Xvs - kd * X_[Acceleration];

    cost_quantity_ = static_cast<Quantity>(config_.d_cost);
    const Eigen::MatrixXd& Lc = L_[cost_quantity_];
    const Eigen::MatrixXd& Wd = basis_.W[static_cast<std::size_t>(config_.d_cost)];
    H0_ = config_.alpha * Lc.transpose() * Lc + config_.beta * Wd.transpose() * Wd +
          config_.gamma * L_[Position].transpose() * L_[Position];
}

Eigen::MatrixXd shiftCoefficients(const BernsteinBasis& basis, const Eigen::MatrixXd& coefficients, int steps) {
    const int n = basis.degree;
    const double delta = double(steps) / (basis.K - 1);
    Eigen::MatrixXd at_new(n + 1, n + 1), at_old(n + 1, n + 1);
    for (int j = 0; j <= n; ++j) {
        const double tau = double(j) / n;
        at_new.row(j) = bernsteinRow(n, tau);
        at_old.row(j) = bernsteinRow(n, tau + delta);
    }
    return at_new.partialPivLu().solve(at_old * coefficients);
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kRhoCeiling = 1e6;

struct Evaluation {
    Eigen::MatrixXd P, V, A;  // K x 3
    double collision = 0.0, thrust = 0.0, velocity = 0.0, position = 0.0, fixed = 0.0;
    double max() const { return std::max({collision, thrust, velocity, position}); }
};

class DroneSolver {
public:
    DroneSolver(const DroneProblem& pb, const FilterContext& ctx) : pb_(pb), ctx_(ctx), cfg_(ctx.config()) {
        K_ = cfg_.K;
        n1_ = ctx.basis().coefficients();
        first_ = pb.continuity.empty() ? 0 : 1;
        radii_ = ctx.limits().ellipsoid_radii * (1.0 + cfg_.collision_margin);
        for (int a = 0; a < 3; ++a) {
            s_(0, a) = pb.state.p(a);
            s_(1, a) = pb.state.v(a);
        }
        R_.resize(K_, 3);
        for (int i = 0; i < K_; ++i) R_.row(i) = pb.reference[static_cast<std::size_t>(i)].transpose();

        using Q = FilterContext::Quantity;
        offP_ = ctx.X(Q::Position) * s_;
        offV_ = ctx.X(Q::Velocity) * s_;
        offA_ = ctx.X(Q::Acceleration) * s_;
        const Eigen::MatrixXd& Lc = ctx.costMap();
        h0_ = -cfg_.alpha * Lc.transpose() * (ctx.costOffset() * s_) +
              cfg_.gamma * ctx.L(Q::Position).transpose() * (R_ - offP_);

        const std::size_t J = pb.neighbors.size();
        coll_.assign(J * static_cast<std::size_t>(K_), Slot{});
        vel_.assign(static_cast<std::size_t>(K_), Slot{});
        thr_.assign(static_cast<std::size_t>(K_), Slot{});
        pos_.assign(static_cast<std::size_t>(K_), Slot{});
    }

    /// Returns false on an inconsistent equality system.
    bool buildEqualities(StepDiagnostics& diag) {
        using Q = FilterContext::Quantity;
        const int m = static_cast<int>(pb_.continuity.size() + pb_.pins.size());
        Eigen::MatrixXd E(m, n1_);
        Eigen::MatrixXd e(m, 3);
        int r = 0;
        for (std::size_t d = 0; d < pb_.continuity.size(); ++d, ++r) {
            E.row(r) = ctx_.basis().W[d].row(0);
            e.row(r) = pb_.continuity[d].transpose();
        }
        for (int step : pb_.pins) {
            E.row(r) = ctx_.L(Q::Position).row(step - 1);
            e.row(r) = R_.row(step - 1) - offP_.row(step - 1);
            ++r;
        }
        for (int i = 0; i < m; ++i) {
            const double nrm = E.row(i).norm();
            if (nrm > 0.0) {
                E.row(i) /= nrm;
                e.row(i) /= nrm;
            }
        }
        if (m == 0) {
            cp_ = Eigen::MatrixXd::Zero(n1_, 3);
            N_ = Eigen::MatrixXd::Identity(n1_, n1_);
            return true;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        int rank = 0;
        while (rank < sv.size() && sv(rank) > 1e-9) ++rank;
        const Eigen::MatrixXd V = svd.matrixV();
        const Eigen::MatrixXd U = svd.matrixU();
        cp_ = V.leftCols(rank) * (sv.head(rank).cwiseInverse().asDiagonal() * (U.leftCols(rank).transpose() * e));
        N_ = V.rightCols(n1_ - rank);

        const Eigen::MatrixXd resid = E * cp_ - e;
        bool ok = true;
        for (int i = 0; i < m; ++i) {
            if (resid.row(i).norm() > 1e-6) {
                ok = false;
                if (i >= static_cast<int>(pb_.continuity.size())) {
                    diag.conflicting_pins.push_back(pb_.pins[static_cast<std::size_t>(i) - pb_.continuity.size()]);
                }
            }
        }
        return ok;
    }

    Evaluation evaluate(const Eigen::MatrixXd& c) const {
        using Q = FilterContext::Quantity;
        Evaluation ev;
        ev.P = ctx_.L(Q::Position) * c + offP_;
        ev.V = ctx_.L(Q::Velocity) * c + offV_;
        ev.A = ctx_.L(Q::Acceleration) * c + offA_;
        const auto& lim = ctx_.limits();
        for (int i = 0; i < K_; ++i) {
            const bool fixed = i < first_;
            auto note = [&](double& slot, double value) {
                if (fixed) {
                    ev.fixed = std::max(ev.fixed, value);
                } else {
                    slot = std::max(slot, value);
                }
            };
            const Vec3 p = ev.P.row(i).transpose();
            for (std::size_t j = 0; j < pb_.neighbors.size(); ++j) {
                const double nrm = (p - pb_.neighbors[j][static_cast<std::size_t>(i)]).cwiseQuotient(radii_).norm();
                note(ev.collision, std::max(0.0, 1.0 - nrm));
            }
            note(ev.velocity, std::max(0.0, ev.V.row(i).norm() - lim.v_max));
            const double f = (ev.A.row(i).transpose() + lim.gravity).norm();
            note(ev.thrust, std::max({0.0, f - lim.f_hi, lim.f_lo - f}));
            const Vec3 below = (lim.p_lo - p).cwiseMax(0.0), above = (p - lim.p_hi).cwiseMax(0.0);
            note(ev.position, below.cwiseMax(above).maxCoeff());
        }
        return ev;
    }

    /// Adds every violated, controllable constraint to the active set.
    void activate(const Evaluation& ev) {
        const auto& lim = ctx_.limits();
        for (int i = first_; i < K_; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Vec3 p = ev.P.row(i).transpose();
            for (std::size_t j = 0; j < pb_.neighbors.size(); ++j) {
                if ((p - pb_.neighbors[j][ui]).cwiseQuotient(radii_).norm() < 1.0) {
                    coll_[j * static_cast<std::size_t>(K_) + ui].active = true;
                }
            }
            if (ev.V.row(i).norm() > lim.v_max) vel_[ui].active = true;
            const double f = (ev.A.row(i).transpose() + lim.gravity).norm();
            if (f > lim.f_hi || f < lim.f_lo) thr_[ui].active = true;
            for (int a = 0; a < 3; ++a) {
                if (p(a) < lim.p_lo(a) || p(a) > lim.p_hi(a)) {
                    pos_[ui].active = true;
                    pos_[ui].mask(a) = 1.0;
                }
            }
        }
    }

    bool anyActive() const {
        auto on = [](const std::vector<Slot>& v) {
            return std::any_of(v.begin(), v.end(), [](const Slot& s) { return s.active; });
        };
        return on(coll_) || on(vel_) || on(thr_) || on(pos_);
    }

    /// Polar/projection step: z = proj(value + lambda / rho) for every active constraint.
    void project(const Evaluation& ev, double rho) {
        const auto& lim = ctx_.limits();
        for (int i = first_; i < K_; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Vec3 p = ev.P.row(i).transpose();
            for (std::size_t j = 0; j < pb_.neighbors.size(); ++j) {
                Slot& s = coll_[j * static_cast<std::size_t>(K_) + ui];
                if (!s.active) continue;
                // Direction and radial multiplier of the normalized separation.
                Vec3 w = (p - pb_.neighbors[j][ui]).cwiseQuotient(radii_) + s.lambda / rho;
                const double d = w.norm();
                if (d < 1e-9) {
                    w = Vec3(0.0, 0.0, pb_.drone < pb_.neighbor_ids[j] ? 1.0 : -1.0);
                } else if (d < 1.0) {
                    // Both drones of a pair veer to their right, so head-on encounters resolve
                    // into a pass instead of a symmetric standoff. The tilt fades at the boundary
                    // so tight constraints keep an exact projection.
                    const Vec3 u = w / d;
                    w = (u + cfg_.lateral_bias * (1.0 - d) * Vec3(u.y(), -u.x(), 0.0)).normalized();
                }
                s.z = w;
            }
            if (vel_[ui].active) {
                Vec3 v = ev.V.row(i).transpose() + vel_[ui].lambda / rho;
                if (v.norm() > lim.v_max) v *= lim.v_max / v.norm();
                vel_[ui].z = v;
            }
            if (thr_[ui].active) {
                const Vec3 f = ev.A.row(i).transpose() + lim.gravity + thr_[ui].lambda / rho;
                const double mag = f.norm();
                const Vec3 dir = mag > 1e-12 ? Vec3(f / mag) : Vec3(0.0, 0.0, 1.0);
                thr_[ui].z = std::clamp(mag, lim.f_lo, lim.f_hi) * dir;
            }
            if (pos_[ui].active) {
                pos_[ui].z = (p + pos_[ui].lambda / rho).cwiseMax(lim.p_lo).cwiseMin(lim.p_hi);
            }
        }
    }

    /// lambda += rho (value - z)
    void updateMultipliers(const Evaluation& ev, double rho) {
        const auto& lim = ctx_.limits();
        for (int i = first_; i < K_; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Vec3 p = ev.P.row(i).transpose();
            for (std::size_t j = 0; j < pb_.neighbors.size(); ++j) {
                Slot& s = coll_[j * static_cast<std::size_t>(K_) + ui];
                if (s.active) s.lambda += rho * ((p - pb_.neighbors[j][ui]).cwiseQuotient(radii_) - s.z);
            }
            if (vel_[ui].active) vel_[ui].lambda += rho * (Vec3(ev.V.row(i).transpose()) - vel_[ui].z);
            if (thr_[ui].active) {
                thr_[ui].lambda += rho * (Vec3(ev.A.row(i).transpose()) + lim.gravity - thr_[ui].z);
            }
            if (pos_[ui].active) pos_[ui].lambda += rho * (p - pos_[ui].z).cwiseProduct(pos_[ui].mask);
        }
    }

    /// Coefficient step: minimize the objective plus rho/2 ||value - z + lambda/rho||^2 over the active set.
    Eigen::MatrixXd solve(double rho, bool penalties) const {
        using Q = FilterContext::Quantity;
        const auto& lim = ctx_.limits();
        const Eigen::MatrixXd& Lp = ctx_.L(Q::Position);
        const Eigen::MatrixXd& Lv = ctx_.L(Q::Velocity);
        const Eigen::MatrixXd& La = ctx_.L(Q::Acceleration);

        std::array<Eigen::MatrixXd, 3> H;
        for (auto& h : H) h = ctx_.baseHessian();
        Eigen::MatrixXd g = h0_;

        auto addRow = [&](int axis, const Eigen::RowVectorXd& l, double w, double target) {
            H[static_cast<std::size_t>(axis)].noalias() += w * l.transpose() * l;
            g.col(axis) += w * target * l.transpose();
        };

        // The 1/2 of the augmented term is folded into rho.
        for (int i = penalties ? first_ : K_; i < K_; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            for (std::size_t j = 0; j < pb_.neighbors.size(); ++j) {
                const Slot& s = coll_[j * static_cast<std::size_t>(K_) + ui];
                if (!s.active) continue;
                const Vec3 target = pb_.neighbors[j][ui] + radii_.cwiseProduct(s.z - s.lambda / rho);
                for (int a = 0; a < 3; ++a) {
                    addRow(a, Lp.row(i), rho / (radii_(a) * radii_(a)), target(a) - offP_(i, a));
                }
            }
            if (vel_[ui].active) {
                const Vec3 target = vel_[ui].z - vel_[ui].lambda / rho;
                for (int a = 0; a < 3; ++a) addRow(a, Lv.row(i), rho, target(a) - offV_(i, a));
            }
            if (thr_[ui].active) {
                const Vec3 target = thr_[ui].z - thr_[ui].lambda / rho - lim.gravity;
                for (int a = 0; a < 3; ++a) addRow(a, La.row(i), rho, target(a) - offA_(i, a));
            }
            if (pos_[ui].active) {
                const Vec3 target = pos_[ui].z - pos_[ui].lambda / rho;
                for (int a = 0; a < 3; ++a) {
                    if (pos_[ui].mask(a) > 0.0) addRow(a, Lp.row(i), rho, target(a) - offP_(i, a));
                }
            }
        }

        Eigen::MatrixXd c(n1_, 3);
        for (int a = 0; a < 3; ++a) {
            const auto& Ha = H[static_cast<std::size_t>(a)];
            if (N_.cols() == 0) {
                c.col(a) = cp_.col(a);
                continue;
            }
            Eigen::MatrixXd Hr = N_.transpose() * Ha * N_;
            const double reg = 1e-12 * std::max(1.0, Hr.trace());
            Hr.diagonal().array() += reg;
            const Eigen::VectorXd gr = N_.transpose() * (g.col(a) - Ha * cp_.col(a));
            c.col(a) = cp_.col(a) + N_ * Hr.ldlt().solve(gr);
        }
        return c;
    }
    DroneSolution finish(const Eigen::MatrixXd& c, const Evaluation& ev, StepDiagnostics diag) const {
        DroneSolution sol;
        sol.coefficients = c;
        sol.positions.reserve(static_cast<std::size_t>(K_ + 1));
        sol.velocities.reserve(static_cast<std::size_t>(K_ + 1));
        sol.positions.push_back(pb_.state.p);
        sol.velocities.push_back(pb_.state.v);
        for (int i = 0; i < K_; ++i) {
            sol.positions.push_back(ev.P.row(i).transpose());
            sol.velocities.push_back(ev.V.row(i).transpose());
        }
        const Eigen::MatrixXd U = ctx_.basis().W[0] * c;
        for (int i = 0; i < K_; ++i) sol.inputs.push_back(U.row(i).transpose());
        diag.res_collision = ev.collision;
        diag.res_thrust = ev.thrust;
        diag.res_velocity = ev.velocity;
        diag.res_position = ev.position;
        diag.res_fixed = ev.fixed;
        for (int step : pb_.pins) {
            diag.pin_error = std::max(diag.pin_error, (ev.P.row(step - 1) - R_.row(step - 1)).norm());
        }
        sol.diagnostics = std::move(diag);
        return sol;
    }

private:
    const DroneProblem& pb_;
    const FilterContext& ctx_;
    const FilterConfig& cfg_;
    int K_ = 0, n1_ = 0, first_ = 0;
    Vec3 radii_;
    Eigen::Matrix<double, 2, 3> s_;
    Eigen::MatrixXd R_, offP_, offV_, offA_, h0_;
    Eigen::MatrixXd cp_, N_;
    struct Slot {
        bool active = false;
        Vec3 lambda = Vec3::Zero();
        Vec3 z = Vec3::Zero();
        Vec3 mask = Vec3::Zero();  ///< axes of an active position bound
    };
    std::vector<Slot> coll_, vel_, thr_, pos_;
};

void checkProblem(const DroneProblem& pb, int K) {
    if (static_cast<int>(pb.reference.size()) != K) throw std::invalid_argument("solveDroneStep: reference must have K samples");
    if (pb.neighbor_ids.size() != pb.neighbors.size()) throw std::invalid_argument("solveDroneStep: neighbor ids mismatch");
    for (const auto& nb : pb.neighbors) {
        if (static_cast<int>(nb.size()) != K) throw std::invalid_argument("solveDroneStep: neighbor prediction must have K samples");
    }
    for (int s : pb.pins) {
        if (s < 1 || s > K) throw std::invalid_argument("solveDroneStep: pin outside the horizon");
    }
}

}  // namespace

DroneSolution solveDroneStep(const DroneProblem& problem, const FilterContext& ctx, const Eigen::MatrixXd* fallback) {
    const auto started = Clock::now();
    const FilterConfig& cfg = ctx.config();
    checkProblem(problem, cfg.K);
    if (problem.continuity.size() > static_cast<std::size_t>(cfg.d_cont) + 1) {
        throw std::invalid_argument("solveDroneStep: more continuity orders than d_cont allows");
    }

    DroneSolver solver(problem, ctx);
    StepDiagnostics diag;
    diag.rho = cfg.rho0;
    auto stamp = [&](DroneSolution sol) {
        sol.diagnostics.solve_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
        return sol;
    };

    if (!solver.buildEqualities(diag)) {
        diag.pin_conflict = true;
        diag.converged = false;
        if (fallback != nullptr) {
            const Evaluation ev = solver.evaluate(*fallback);
            diag.residual_history.push_back(ev.max());
            return stamp(solver.finish(*fallback, ev, diag));
        }
    }

    Eigen::MatrixXd best = solver.solve(cfg.rho0, false);
    Evaluation best_ev = solver.evaluate(best);
    double best_max = best_ev.max();
    diag.residual_history.push_back(best_max);

    Evaluation ev = best_ev;
    double prev_max = best_max;
    double rho = cfg.rho0;
    int it = 0;
    while (best_max > cfg.tol_residual && it < cfg.max_am_iters) {
        ++it;
        solver.activate(ev);
        if (!solver.anyActive()) break;
        solver.project(ev, rho);
        solver.updateMultipliers(ev, rho);
        const Eigen::MatrixXd c = solver.solve(rho, true);
        ev = solver.evaluate(c);
        const double cur = ev.max();
        if (cur < best_max) {
            best = c;
            best_ev = ev;
            best_max = cur;
        }
        if (cur > 0.9 * prev_max) rho = std::min(rho * cfg.rho_growth, kRhoCeiling * cfg.rho0);
        prev_max = cur;
        diag.residual_history.push_back(best_max);
    }
    diag.iterations = it;
    diag.rho = rho;
    diag.converged = !diag.pin_conflict && best_max <= cfg.tol_residual;
    return stamp(solver.finish(best, best_ev, diag));
}

std::vector<DronePlan> initialPlans(const ReferenceSet& refs) {
    std::vector<DronePlan> plans(static_cast<std::size_t>(refs.drones()));
    for (int d = 0; d < refs.drones(); ++d) {
        plans[static_cast<std::size_t>(d)].prediction = {0, refs.positions[static_cast<std::size_t>(d)]};
    }
    return plans;
}

SwarmStep stepSwarm(const std::vector<DroneState>& states, const ReferenceSet& refs,
                    const std::vector<DronePlan>& plans, int k, const FilterContext& ctx) {
    const int N = static_cast<int>(states.size());
    if (refs.drones() != N || static_cast<int>(plans.size()) != N) {
        throw std::invalid_argument("stepSwarm: states, references and plans disagree on the swarm size");
    }
    const FilterConfig& cfg = ctx.config();
    const int K = cfg.K;
    const int last = refs.steps() - 1;

    SwarmStep out;
    out.inputs.resize(static_cast<std::size_t>(N));
    out.plans.resize(static_cast<std::size_t>(N));
    out.diagnostics.resize(static_cast<std::size_t>(N));

    auto solveOne = [&](int n) {
        const auto un = static_cast<std::size_t>(n);
        DroneProblem pb;
        pb.drone = n;
        pb.state = states[un];
        pb.reference.reserve(static_cast<std::size_t>(K));
        for (int i = 1; i <= K; ++i) {
            const int idx = std::min(k + i, last);
            pb.reference.push_back(refs.at(n, idx));
            if (k + i <= last && refs.isPinned(k + i)) pb.pins.push_back(i);
        }
        const DronePlan& plan = plans[un];
        Eigen::MatrixXd shifted;
        if (plan.coefficients.size() > 0) {
            const double tau = double(k - plan.start) / (K - 1);
            for (int d = 0; d <= cfg.d_cont; ++d) {
                pb.continuity.push_back((ctx.basis().row(tau, d) * plan.coefficients).transpose());
            }
            shifted = shiftCoefficients(ctx.basis(), plan.coefficients, k - plan.start);
        }
        for (int j = 0; j < N; ++j) {
            if (j == n) continue;
            if ((states[static_cast<std::size_t>(j)].p - states[un].p).norm() > cfg.neighbor_radius) continue;
            std::vector<Vec3> traj;
            traj.reserve(static_cast<std::size_t>(K));
            for (int i = 1; i <= K; ++i) traj.push_back(plans[static_cast<std::size_t>(j)].prediction.at(k + i));
            pb.neighbors.push_back(std::move(traj));
            pb.neighbor_ids.push_back(j);
        }
        DroneSolution sol = solveDroneStep(pb, ctx, shifted.size() > 0 ? &shifted : nullptr);
        out.inputs[un] = sol.certifiedInput();
        out.plans[un] = {k, sol.coefficients, {k, sol.positions}};
        out.diagnostics[un] = std::move(sol.diagnostics);
    };

    if (cfg.threads == 1 || N == 1) {
        for (int n = 0; n < N; ++n) solveOne(n);
    } else {
        tbb::task_arena arena(cfg.threads > 0 ? cfg.threads : tbb::task_arena::automatic);
        arena.execute([&] { tbb::parallel_for(0, N, solveOne); });
    }
    return out;
}

int CertifiedPerformance::nonConverged() const {
    int count = 0;
    for (const auto& step : diagnostics) {
        for (const auto& d : step) count += d.converged ? 0 : 1;
    }
    return count;
}

double CertifiedPerformance::nonConvergedFraction() const {
    const std::size_t total = diagnostics.size() * static_cast<std::size_t>(drones());
    return total == 0 ? 0.0 : double(nonConverged()) / double(total);
}

CertifiedPerformance runFilter(const ReferenceSet& refs, const ClosedLoopModel& model, const PhysicalLimits& limits,
                               const FilterConfig& config, std::vector<DroneState> initial) {
    if (std::abs(refs.dt - model.dt) > 1e-9) throw std::invalid_argument("runFilter: reference dt differs from the model dt");
    const FilterContext ctx(model, limits, config);
    const int N = refs.drones();
    const int steps = refs.steps();
    if (initial.empty()) {
        for (int n = 0; n < N; ++n) initial.push_back(DroneState::hoverAt(refs.at(n, 0)));
    }
    if (static_cast<int>(initial.size()) != N) throw std::invalid_argument("runFilter: one initial state per drone");

    CertifiedPerformance perf;
    perf.dt = refs.dt;
    perf.t0 = refs.t0;
    perf.positions.assign(static_cast<std::size_t>(N), std::vector<Vec3>(static_cast<std::size_t>(steps)));
    perf.velocities = perf.positions;
    perf.inputs = perf.positions;
    perf.diagnostics.reserve(static_cast<std::size_t>(steps));

    std::vector<DroneState> states = std::move(initial);
    std::vector<DronePlan> plans = initialPlans(refs);
    for (int k = 0; k < steps; ++k) {
        for (int n = 0; n < N; ++n) {
            const auto un = static_cast<std::size_t>(n);
            perf.positions[un][static_cast<std::size_t>(k)] = states[un].p;
            perf.velocities[un][static_cast<std::size_t>(k)] = states[un].v;
            if (refs.isPinned(k)) {
                bool ok = true;
                for (int back = 1; back <= 2 && k - back >= 0; ++back) {
                    ok = ok && perf.diagnostics[static_cast<std::size_t>(k - back)][un].converged;
                }
                perf.pin_records.push_back({k, n, (states[un].p - refs.at(n, k)).norm(), ok});
            }
        }
        SwarmStep step = stepSwarm(states, refs, plans, k, ctx);
        for (int n = 0; n < N; ++n) {
            const auto un = static_cast<std::size_t>(n);
            perf.inputs[un][static_cast<std::size_t>(k)] = step.inputs[un];
            states[un] = model.step(states[un], step.inputs[un]);
        }
        plans = std::move(step.plans);
        perf.diagnostics.push_back(std::move(step.diagnostics));
    }
    return perf;
}

}  // namespace swarmchor
