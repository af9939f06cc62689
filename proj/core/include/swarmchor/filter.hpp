#pragma once

#include "swarmchor/choreography.hpp"
#include "swarmchor/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace swarmchor {

/// Bernstein polynomials of degree n on tau in [0, 1], sampled at the K horizon steps
/// tau_i = i / (K - 1). W[d] maps per-axis coefficients to the d-th time derivative.
struct BernsteinBasis {
    int degree = 8;
    int K = 15;
    double dt = 0.1;
    /// d tau / dt
    double time_scale = 1.0;
    std::array<Eigen::MatrixXd, 4> W;

    int coefficients() const { return degree + 1; }
    /// d-th time derivative row at an arbitrary tau (extrapolates outside [0, 1]).
    Eigen::RowVectorXd row(double tau, int derivative) const;
};

/// d-th tau-derivative of the degree-n Bernstein basis at tau.
Eigen::RowVectorXd bernsteinRow(int degree, double tau, int derivative = 0);
/// n x (n+1) matrix taking degree-n coefficients to the degree-(n-1) coefficients of the tau-derivative.
Eigen::MatrixXd bernsteinDerivativeOperator(int degree);
BernsteinBasis buildBasis(int degree, int K, double dt);

/// Stacked p_{k+1..k+K} = P_x x_k + P_u u_{k..k+K-1}, x = [p; v], stacking step-major with xyz inner.
struct RolloutOperators {
    Eigen::MatrixXd P_x;  ///< 3K x 6
    Eigen::MatrixXd P_u;  ///< 3K x 3K
    /// The same maps for one axis: state (p, v), inputs u_0..u_{K-1}.
    Eigen::MatrixXd axis_Px;  ///< K x 2, positions
    Eigen::MatrixXd axis_Pu;  ///< K x K
    Eigen::MatrixXd axis_Vx;  ///< K x 2, velocities
    Eigen::MatrixXd axis_Vu;  ///< K x K
};

RolloutOperators rolloutOperators(const ClosedLoopModel& model, int K);

struct FilterConfig {
    int degree = 8;
    int K = 15;
    double alpha = 0.01;
    double beta = 0.01;
    double gamma = 10.0;
    int d_cost = 2;
    int d_cont = 2;
    double rho0 = 100.0;
    double rho_growth = 1.2;
    int max_am_iters = 50;
    double tol_residual = 1e-3;
    double neighbor_radius = std::numeric_limits<double>::infinity();
    /// Relative inflation of the avoidance ellipsoid used inside the solver.
    double collision_margin = 0.05;
    /// Rightward tilt of the collision push direction; breaks head-on symmetry.
    double lateral_bias = 0.3;
    /// Worker threads for per-drone solves; 0 picks the hardware default.
    int threads = 0;

    void validate() const;
};

/// Neighbor prediction indexed by absolute grid step; linear extrapolation outside the stored span.
struct Prediction {
    int start = 0;
    std::vector<Vec3> positions;

    Vec3 at(int k) const;
};

struct DroneProblem {
    int drone = 0;
    DroneState state;
    /// r at horizon steps 1..K.
    std::vector<Vec3> reference;
    /// Horizon steps (1..K) carrying a hard position equality to reference[step - 1].
    std::vector<int> pins;
    /// u, u', u'', ... at the current step from the previous plan; empty disables continuity.
    std::vector<Vec3> continuity;
    /// Predicted neighbor positions at horizon steps 1..K.
    std::vector<std::vector<Vec3>> neighbors;
    std::vector<int> neighbor_ids;
};

struct StepDiagnostics {
    int iterations = 0;
    double res_collision = 0.0;  ///< in normalized envelope units
    double res_thrust = 0.0;     ///< m/s^2
    double res_velocity = 0.0;   ///< m/s
    double res_position = 0.0;   ///< m
    /// Largest violation on the first horizon sample, which continuity fixes and the solver cannot change.
    double res_fixed = 0.0;
    double pin_error = 0.0;  ///< worst planned |p_s - r_s| over pins in the horizon
    double solve_ms = 0.0;
    double rho = 0.0;
    bool converged = true;
    bool pin_conflict = false;
    std::vector<int> conflicting_pins;
    /// Best-so-far max residual after each AM iteration (index 0 is the penalty-free solve).
    std::vector<double> residual_history;

    double maxResidual() const;
};

struct DroneSolution {
    /// (n+1) x 3 Bernstein coefficients of u over the horizon.
    Eigen::MatrixXd coefficients;
    /// Horizon samples 0..K (index 0 is the current state).
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    /// u at horizon steps 0..K-1.
    std::vector<Vec3> inputs;
    StepDiagnostics diagnostics;

    const Vec3& certifiedInput() const { return inputs.front(); }
};

/// Immutable per-run data shared by every drone solve.
class FilterContext {
public:
    FilterContext(const ClosedLoopModel& model, const PhysicalLimits& limits, const FilterConfig& config);

    const ClosedLoopModel& model() const { return model_; }
    const PhysicalLimits& limits() const { return limits_; }
    const FilterConfig& config() const { return config_; }
    const BernsteinBasis& basis() const { return basis_; }
    const RolloutOperators& rollout() const { return rollout_; }

    /// Per-axis affine maps quantity = L c + X (p0, v0) for p (steps 1..K), v (1..K),
    /// a (0..K-1) and jerk (0..K-1).
    enum Quantity { Position = 0, Velocity = 1, Acceleration = 2, Jerk = 3 };
    const Eigen::MatrixXd& L(Quantity q) const { return L_[q]; }
    const Eigen::MatrixXd& X(Quantity q) const { return X_[q]; }
    /// Smoothness and tracking part of the per-axis Hessian.
    const Eigen::MatrixXd& baseHessian() const { return H0_; }
    const Eigen::MatrixXd& costMap() const { return L_[cost_quantity_]; }
    const Eigen::MatrixXd& costOffset() const { return X_[cost_quantity_]; }

private:
    ClosedLoopModel model_;
    PhysicalLimits limits_;
    FilterConfig config_;
    BernsteinBasis basis_;
    RolloutOperators rollout_;
    std::array<Eigen::MatrixXd, 4> L_;
    std::array<Eigen::MatrixXd, 4> X_;
    Eigen::MatrixXd H0_;
    Quantity cost_quantity_ = Acceleration;
};

/// One receding-horizon solve. When the pins and continuity conditions are inconsistent the
/// solution replays the `fallback` coefficients (if given) and flags pin_conflict.
DroneSolution solveDroneStep(const DroneProblem& problem, const FilterContext& ctx,
                             const Eigen::MatrixXd* fallback = nullptr);

/// Coefficients of u(tau + steps / (K - 1)), i.e. the same polynomial re-anchored `steps` samples later.
Eigen::MatrixXd shiftCoefficients(const BernsteinBasis& basis, const Eigen::MatrixXd& coefficients, int steps);

/// The plan a drone committed to at step `start`, kept for continuity and as its neighbor prediction.
struct DronePlan {
    int start = 0;
    Eigen::MatrixXd coefficients;  ///< empty before the first solve
    Prediction prediction;
};

struct SwarmStep {
    std::vector<Vec3> inputs;
    std::vector<DronePlan> plans;
    std::vector<StepDiagnostics> diagnostics;
};

/// Solves every drone at step k against the frozen `plans` snapshot.
SwarmStep stepSwarm(const std::vector<DroneState>& states, const ReferenceSet& refs,
                    const std::vector<DronePlan>& plans, int k, const FilterContext& ctx);

/// Plans seeded from the raw references, used before the first solve.
std::vector<DronePlan> initialPlans(const ReferenceSet& refs);

struct CertifiedPerformance {
    double dt = 0.1;
    double t0 = 0.0;
    /// positions[drone][k]: the certified state trajectory; inputs[drone][k]: the commanded references.
    std::vector<std::vector<Vec3>> positions;
    std::vector<std::vector<Vec3>> velocities;
    std::vector<std::vector<Vec3>> inputs;
    /// diagnostics[k][drone]
    std::vector<std::vector<StepDiagnostics>> diagnostics;
    struct PinRecord {
        int k = 0;
        int drone = 0;
        double error = 0.0;  ///< |p_s - r_s| of the reached state
        /// The solves that fixed this state (steps k-1 and k-2) both converged.
        bool converged = true;
    };
    std::vector<PinRecord> pin_records;

    int steps() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
    int drones() const { return static_cast<int>(positions.size()); }
    double timeAt(int k) const { return t0 + k * dt; }
    int nonConverged() const;
    double nonConvergedFraction() const;
    /// More than 1% of drone-steps failed to converge.
    bool failed() const { return nonConvergedFraction() > 0.01; }
};

/// Initial states default to hovering at the first reference samples.
CertifiedPerformance runFilter(const ReferenceSet& refs, const ClosedLoopModel& model, const PhysicalLimits& limits,
                               const FilterConfig& config, std::vector<DroneState> initial = {});

/// t,drone,x,y,z,u_x,u_y,u_z
void writeCertifiedCsv(const std::filesystem::path& path, const CertifiedPerformance& perf);
CertifiedPerformance readCertifiedCsv(const std::filesystem::path& path);
/// Residuals, iterations and flags. Contains no wall-clock data so it is reproducible.
nlohmann::json diagnosticsToJson(const CertifiedPerformance& perf, const ReferenceSet& refs,
                                 const PhysicalLimits& limits);
/// Per-step solve times.
nlohmann::json timingsToJson(const CertifiedPerformance& perf);

}  // namespace swarmchor
