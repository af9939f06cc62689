#include "swarmchor/filter.hpp"

#include <cmath>
#include <stdexcept>

namespace swarmchor {
namespace {

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// B_{i,n}(tau) for i = 0..n
Eigen::RowVectorXd bernsteinValues(int n, double tau) {
    Eigen::RowVectorXd out(n + 1);
    for (int i = 0; i <= n; ++i) out(i) = binomial(n, i) * std::pow(tau, i) * std::pow(1.0 - tau, n - i);
    return out;
}

}  // namespace

Eigen::RowVectorXd bernsteinRow(int degree, double tau, int derivative) {
    if (degree < 0 || derivative < 0) throw std::invalid_argument("bernsteinRow: negative degree or order");
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(degree + 1);
    if (derivative > degree) return out;
    // d^d/dtau^d B_{i,n} = n!/(n-d)! sum_j (-1)^(d-j) C(d,j) B_{i-j,n-d}
    const Eigen::RowVectorXd low = bernsteinValues(degree - derivative, tau);
    double falling = 1.0;
    for (int m = 0; m < derivative; ++m) falling *= degree - m;
    for (int i = 0; i <= degree; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= derivative; ++j) {
            const int idx = i - j;
            if (idx < 0 || idx > degree - derivative) continue;
            acc += ((derivative - j) % 2 == 0 ? 1.0 : -1.0) * binomial(derivative, j) * low(idx);
        }
        out(i) = falling * acc;
    }
    return out;
}

Eigen::MatrixXd bernsteinDerivativeOperator(int degree) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(degree, degree + 1);
    for (int i = 0; i < degree; ++i) {
        D(i, i) = -degree;
        D(i, i + 1) = degree;
    }
    return D;
}

Eigen::RowVectorXd BernsteinBasis::row(double tau, int derivative) const {
    return bernsteinRow(degree, tau, derivative) * std::pow(time_scale, derivative);
}

BernsteinBasis buildBasis(int degree, int K, double dt) {
    if (degree < 1) throw std::invalid_argument("buildBasis: degree must be at least 1");
    if (K < 2) throw std::invalid_argument("buildBasis: horizon K must be at least 2");
    if (!(dt > 0.0)) throw std::invalid_argument("buildBasis: dt must be positive");
    BernsteinBasis b;
    b.degree = degree;
    b.K = K;
    b.dt = dt;
    b.time_scale = 1.0 / ((K - 1) * dt);
    for (int d = 0; d < 4; ++d) {
        b.W[d].resize(K, degree + 1);
        for (int i = 0; i < K; ++i) b.W[d].row(i) = b.row(double(i) / (K - 1), d);
    }
    // Exact endpoint interpolation, free of pow() rounding.
    b.W[0].row(0).setZero();
    b.W[0](0, 0) = 1.0;
    b.W[0].row(K - 1).setZero();
    b.W[0](K - 1, degree) = 1.0;
    return b;
}

RolloutOperators rolloutOperators(const ClosedLoopModel& model, int K) {
    if (K < 1) throw std::invalid_argument("rolloutOperators: K must be positive");
    RolloutOperators ops;
    ops.P_x = Eigen::MatrixXd::Zero(3 * K, 6);
    ops.P_u = Eigen::MatrixXd::Zero(3 * K, 3 * K);
    ops.axis_Px = Eigen::MatrixXd::Zero(K, 2);
    ops.axis_Pu = Eigen::MatrixXd::Zero(K, K);
    ops.axis_Vx = Eigen::MatrixXd::Zero(K, 2);
    ops.axis_Vu = Eigen::MatrixXd::Zero(K, K);

    // Full 6-state iteration: Phi = A^(i+1), Gamma_j = A^(i-j) B.
    Mat6 Phi = Mat6::Identity();
    std::vector<Mat63> gammas;
    for (int i = 0; i < K; ++i) {
        Phi = model.A * Phi;
        for (auto& g : gammas) g = model.A * g;
        gammas.push_back(model.B);
        ops.P_x.block(3 * i, 0, 3, 6) = Phi.topRows(3);
        for (int j = 0; j <= i; ++j) ops.P_u.block(3 * i, 3 * j, 3, 3) = gammas[static_cast<std::size_t>(j)].topRows(3);
    }

    Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
    std::vector<Eigen::Vector2d> g;
    for (int i = 0; i < K; ++i) {
        a = model.axis_A * a;
        for (auto& gj : g) gj = model.axis_A * gj;
        g.push_back(model.axis_B);
        ops.axis_Px.row(i) = a.row(0);
        ops.axis_Vx.row(i) = a.row(1);
        for (int j = 0; j <= i; ++j) {
            ops.axis_Pu(i, j) = g[static_cast<std::size_t>(j)](0);
            ops.axis_Vu(i, j) = g[static_cast<std::size_t>(j)](1);
        }
    }
    return ops;
}

}  // namespace swarmchor
