#include "swarmchor/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>
#include <string>

namespace swarmchor {

bool isFinite(const Vec3& v) { return v.allFinite(); }

void PhysicalLimits::validate() const {
    if (!isFinite(p_lo) || !isFinite(p_hi) || !isFinite(gravity) || !isFinite(ellipsoid_radii)) {
        throw std::invalid_argument("limits: non-finite component");
    }
    if (!(p_lo.array() < p_hi.array()).all()) {
        throw std::invalid_argument("limits: p_lo must be strictly below p_hi on every axis");
    }
    if (!(v_max > 0.0)) throw std::invalid_argument("limits: v_max must be positive");
    const double g = gravity.norm();
    if (!(f_lo > 0.0 && f_lo < g && g < f_hi)) {
        throw std::invalid_argument("limits: thrust bounds must satisfy 0 < f_lo < |g| < f_hi");
    }
    if (!(ellipsoid_radii.array() > 0.0).all()) {
        throw std::invalid_argument("limits: ellipsoid radii must be positive");
    }
    if (ellipsoid_radii.z() < std::max(ellipsoid_radii.x(), ellipsoid_radii.y())) {
        throw std::invalid_argument("limits: ellipsoid z radius must be at least the xy radius");
    }
}

bool PhysicalLimits::insideArena(const Vec3& p, double tol) const {
    return ((p.array() >= p_lo.array() - tol) && (p.array() <= p_hi.array() + tol)).all();
}

double PhysicalLimits::ellipsoidDistance(const Vec3& a, const Vec3& b) const {
    return ((a - b).array() / ellipsoid_radii.array()).matrix().norm();
}

Vec6 DroneState::stacked() const {
    Vec6 x;
    x << p, v;
    return x;
}

DroneState DroneState::fromStacked(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }

DroneState ClosedLoopModel::step(const DroneState& x, const Vec3& u) const {
    return DroneState::fromStacked(step(x.stacked(), u));
}

Vec6 ClosedLoopModel::step(const Vec6& x, const Vec3& u) const { return A * x + B * u; }

Vec3 ClosedLoopModel::acceleration(const DroneState& x, const Vec3& u) const {
    return k_p * (u - x.p) - k_d * x.v;
}

double ClosedLoopModel::spectralRadius() const {
    return axis_A.eigenvalues().cwiseAbs().maxCoeff();
}

ClosedLoopModel discretizeModel(double k_p, double k_d, double dt) {
    if (!(k_p > 0.0) || !(k_d > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("discretizeModel: k_p, k_d and dt must be positive (got k_p=" +
                                    std::to_string(k_p) + ", k_d=" + std::to_string(k_d) +
                                    ", dt=" + std::to_string(dt) + ")");
    }
    // exp([[Ac, Bc], [0, 0]] dt) = [[Ad, Bd], [0, I]]
    Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
    aug(0, 1) = 1.0;
    aug(1, 0) = -k_p;
    aug(1, 1) = -k_d;
    aug(1, 2) = k_p;
    const Eigen::Matrix3d e = (aug * dt).exp();

    ClosedLoopModel m;
    m.dt = dt;
    m.k_p = k_p;
    m.k_d = k_d;
    m.axis_A = e.topLeftCorner<2, 2>();
    m.axis_B = e.topRightCorner<2, 1>();

    m.A.setZero();
    m.B.setZero();
    for (int axis = 0; axis < 3; ++axis) {
        m.A(axis, axis) = m.axis_A(0, 0);
        m.A(axis, 3 + axis) = m.axis_A(0, 1);
        m.A(3 + axis, axis) = m.axis_A(1, 0);
        m.A(3 + axis, 3 + axis) = m.axis_A(1, 1);
        m.B(axis, axis) = m.axis_B(0);
        m.B(3 + axis, axis) = m.axis_B(1);
    }
    return m;
}

}  // namespace swarmchor
