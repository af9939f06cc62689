#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace swarmchor {

using Vec3 = Eigen::Vector3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

bool isFinite(const Vec3& v);

/// Arena, speed, thrust and envelope limits shared by the compiler, the filter and the simulator.
struct PhysicalLimits {
    Vec3 p_lo{-4.0, -4.0, 0.2};
    Vec3 p_hi{4.0, 4.0, 3.0};
    double v_max = 2.0;
    double f_lo = 4.0;
    double f_hi = 16.0;
    Vec3 gravity{0.0, 0.0, 9.81};
    /// Semi-axes of the avoidance ellipsoid. z is elongated for downwash.
    Vec3 ellipsoid_radii{0.25, 0.25, 0.60};

    /// Throws std::invalid_argument naming the first broken invariant.
    void validate() const;

    bool insideArena(const Vec3& p, double tol = 0.0) const;
    /// ||diag(radii)^-1 (a - b)||
    double ellipsoidDistance(const Vec3& a, const Vec3& b) const;
};

struct DroneState {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();

    Vec6 stacked() const;
    static DroneState fromStacked(const Vec6& x);
    static DroneState hoverAt(const Vec3& p) { return {p, Vec3::Zero()}; }
};

/// Discrete closed-loop position tracking model x+ = A x + B u with x = [p; v] and u a
/// position reference. The three axes are decoupled and share the per-axis system.
struct ClosedLoopModel {
    Mat6 A = Mat6::Identity();
    Mat63 B = Mat63::Zero();
    double dt = 0.1;
    double k_p = 10.0;
    double k_d = 5.0;
    /// Per-axis blocks: state (p, v), input u.
    Eigen::Matrix2d axis_A = Eigen::Matrix2d::Identity();
    Eigen::Vector2d axis_B = Eigen::Vector2d::Zero();

    DroneState step(const DroneState& x, const Vec3& u) const;
    Vec6 step(const Vec6& x, const Vec3& u) const;
    /// Continuous-time acceleration k_p (u - p) - k_d v.
    Vec3 acceleration(const DroneState& x, const Vec3& u) const;
    double spectralRadius() const;
};

/// Exact zero-order-hold discretization of p'' = k_p (u - p) - k_d p' on every axis.
ClosedLoopModel discretizeModel(double k_p, double k_d, double dt);

}  // namespace swarmchor
