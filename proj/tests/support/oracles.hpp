// Independent reference computations and scenario builders shared by the unit and acceptance tests.
#pragma once

#include "swarmchor/choreography.hpp"
#include "swarmchor/filter.hpp"
#include "swarmchor/music.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using swarmchor::Vec3;
constexpr double kPi = 3.14159265358979323846;

/// RK4 on p'' = kp (u - p) - kd p' with u held constant over each control interval.
inline std::vector<double> integrateAxis(double kp, double kd, double dt, double p0, double v0,
                                         const std::vector<double>& u, double h = 1e-4) {
    std::vector<double> out{p0};
    double p = p0, v = v0;
    const int sub = static_cast<int>(std::lround(dt / h));
    for (double uk : u) {
        for (int s = 0; s < sub; ++s) {
            auto f = [&](double pp, double vv) { return std::pair{vv, kp * (uk - pp) - kd * vv}; };
            const auto [a1, b1] = f(p, v);
            const auto [a2, b2] = f(p + 0.5 * h * a1, v + 0.5 * h * b1);
            const auto [a3, b3] = f(p + 0.5 * h * a2, v + 0.5 * h * b2);
            const auto [a4, b4] = f(p + h * a3, v + h * b3);
            p += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
            v += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
        }
        out.push_back(p);
    }
    return out;
}

/// Bernstein polynomial value by de Casteljau.
inline double deCasteljau(std::vector<double> c, double t) {
    for (std::size_t r = 1; r < c.size(); ++r) {
        for (std::size_t i = 0; i + r < c.size(); ++i) c[i] = (1.0 - t) * c[i] + t * c[i + 1];
    }
    return c.front();
}

/// d-th tau-derivative at tau = 0: n!/(n-d)! times the d-th forward difference of the coefficients.
inline double bernsteinDerivativeAtZero(const std::vector<double>& c, int d) {
    const int n = static_cast<int>(c.size()) - 1;
    if (d > n) return 0.0;
    std::vector<double> diff(c);
    for (int r = 0; r < d; ++r) {
        for (std::size_t i = 0; i + 1 < diff.size(); ++i) diff[i] = diff[i + 1] - diff[i];
        diff.pop_back();
    }
    double scale = 1.0;
    for (int m = 0; m < d; ++m) scale *= n - m;
    return scale * diff.front();
}

/// Solves min 1/2 x'Hx + f'x s.t. Ex = e through the full KKT matrix.
inline Eigen::VectorXd denseKkt(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::MatrixXd& E,
                                const Eigen::VectorXd& e) {
    const Eigen::Index n = H.rows(), m = E.rows();
    Eigen::MatrixXd KKT = Eigen::MatrixXd::Zero(n + m, n + m);
    KKT.topLeftCorner(n, n) = H;
    KKT.topRightCorner(n, m) = E.transpose();
    KKT.bottomLeftCorner(m, n) = E;
    Eigen::VectorXd rhs(n + m);
    rhs << -f, e;
    return KKT.fullPivLu().solve(rhs).head(n);
}

/// Per-axis pinned smoothing problem built by direct simulation of the closed loop.
struct AxisQp {
    Eigen::MatrixXd H;
    Eigen::VectorXd f;
    Eigen::MatrixXd E;
    Eigen::VectorXd e;
};

/// alpha ||a||^2 + beta ||u''||^2 on steps 0..K-1, pins on p at horizon steps, u^(d)(0) continuity.
inline AxisQp pinnedSmoothingQp(const swarmchor::ClosedLoopModel& model, int degree, int K, double alpha, double beta,
                                double p0, double v0, const std::vector<std::pair<int, double>>& pins,
                                const std::vector<double>& continuity) {
    const int n1 = degree + 1;
    const double dt = model.dt;
    const double ts = 1.0 / ((K - 1) * dt);

    // Affine maps coefficient -> sampled quantities, assembled column by column.
    auto sampleInputs = [&](const std::vector<double>& c) {
        std::vector<double> u(static_cast<std::size_t>(K));
        for (int i = 0; i < K; ++i) u[static_cast<std::size_t>(i)] = deCasteljau(c, double(i) / (K - 1));
        return u;
    };
    auto secondDerivative = [&](const std::vector<double>& c) {
        // u'' = n (n-1) * Bernstein(n-2) of second differences, times ts^2
        std::vector<double> d2(c.size() - 2);
        for (std::size_t i = 0; i < d2.size(); ++i) d2[i] = (c[i + 2] - 2 * c[i + 1] + c[i]) * degree * (degree - 1);
        std::vector<double> out(static_cast<std::size_t>(K));
        for (int i = 0; i < K; ++i) out[static_cast<std::size_t>(i)] = deCasteljau(d2, double(i) / (K - 1)) * ts * ts;
        return out;
    };
    struct Sim {
        std::vector<double> p, a;
    };
    auto simulate = [&](const std::vector<double>& u, double pp, double vv) {
        Sim s;
        for (int i = 0; i < K; ++i) {
            const double ui = u[static_cast<std::size_t>(i)];
            s.a.push_back(model.k_p * (ui - pp) - model.k_d * vv);
            const Eigen::Vector2d x = model.axis_A * Eigen::Vector2d(pp, vv) + model.axis_B * ui;
            pp = x(0);
            vv = x(1);
            s.p.push_back(pp);
        }
        return s;
    };

    Eigen::MatrixXd Ma(K, n1), Mu2(K, n1), Mp(K, n1);
    for (int j = 0; j < n1; ++j) {
        std::vector<double> c(static_cast<std::size_t>(n1), 0.0);
        c[static_cast<std::size_t>(j)] = 1.0;
        const Sim s = simulate(sampleInputs(c), 0.0, 0.0);
        const auto u2 = secondDerivative(c);
        for (int i = 0; i < K; ++i) {
            Ma(i, j) = s.a[static_cast<std::size_t>(i)];
            Mp(i, j) = s.p[static_cast<std::size_t>(i)];
            Mu2(i, j) = u2[static_cast<std::size_t>(i)];
        }
    }
    const Sim free = simulate(std::vector<double>(static_cast<std::size_t>(K), 0.0), p0, v0);
    Eigen::VectorXd ma(K), mp(K);
    for (int i = 0; i < K; ++i) {
        ma(i) = free.a[static_cast<std::size_t>(i)];
        mp(i) = free.p[static_cast<std::size_t>(i)];
    }

    AxisQp qp;
    qp.H = 2.0 * (alpha * Ma.transpose() * Ma + beta * Mu2.transpose() * Mu2);
    qp.f = 2.0 * alpha * Ma.transpose() * ma;
    const int m = static_cast<int>(pins.size() + continuity.size());
    qp.E.resize(m, n1);
    qp.e.resize(m);
    int r = 0;
    for (std::size_t d = 0; d < continuity.size(); ++d, ++r) {
        for (int j = 0; j < n1; ++j) {
            std::vector<double> c(static_cast<std::size_t>(n1), 0.0);
            c[static_cast<std::size_t>(j)] = 1.0;
            qp.E(r, j) = bernsteinDerivativeAtZero(c, static_cast<int>(d)) * std::pow(ts, double(d));
        }
        qp.e(r) = continuity[d];
    }
    for (const auto& [step, target] : pins) {
        qp.E.row(r) = Mp.row(step - 1);
        qp.e(r) = target - mp(step - 1);
        ++r;
    }
    return qp;
}

inline swarmchor::AudioSignal clickTrack(double bpm, double seconds, double first = 0.25, double sr = 44100.0,
                                         double amplitude = 0.8) {
    swarmchor::AudioSignal s;
    s.sample_rate = sr;
    s.samples.assign(static_cast<std::size_t>(seconds * sr), 0.0);
    for (double t = first; t < seconds; t += 60.0 / bpm) {
        const auto start = static_cast<std::size_t>(std::lround(t * sr));
        for (std::size_t i = 0; i < 256 && start + i < s.samples.size(); ++i) {
            s.samples[start + i] = amplitude * std::sin(2 * kPi * 1000.0 * double(i) / sr) * std::exp(-double(i) / 80.0);
        }
    }
    return s;
}

inline std::vector<double> clickTimes(double bpm, double seconds, double first = 0.25) {
    std::vector<double> t;
    for (double x = first; x < seconds; x += 60.0 / bpm) t.push_back(x);
    return t;
}

inline swarmchor::AudioSignal tones(const std::vector<double>& freqs, double seconds, double sr = 44100.0,
                                    double amplitude = 0.25) {
    swarmchor::AudioSignal s;
    s.sample_rate = sr;
    s.samples.resize(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        double v = 0.0;
        for (double f : freqs) v += amplitude * std::sin(2 * kPi * f * double(i) / sr);
        s.samples[i] = v;
    }
    return s;
}

inline swarmchor::BeatTimeline beatsEvery(double step, double end, double start = 0.0) {
    swarmchor::BeatTimeline b;
    for (int i = 0;; ++i) {
        const double t = start + i * step;
        if (t > end + 1e-9) break;
        b.beats.push_back({t, 1.0, -6.0, std::nullopt});
    }
    b.duration = end;
    return b;
}

inline swarmchor::BeatTimeline beatsAt(const std::vector<double>& times, double duration) {
    swarmchor::BeatTimeline b;
    for (double t : times) b.beats.push_back({t, 1.0, -6.0, std::nullopt});
    b.duration = duration;
    return b;
}

/// N drones on a circle; each leg even drones advance `shift` slots and odd drones go back `shift`
/// slots, so neighbouring references cross head-on in the middle of every leg.
inline std::string counterRotatingScore(int N, double radius, int shift, double leg, int legs, double z = 1.5) {
    std::string s = fmt::format("drones {}\n", N);
    for (int w = 0; w <= legs; ++w) {
        for (int d = 0; d < N; ++d) {
            const int slot = d + w * shift * (d % 2 ? -1 : 1);
            const double ang = 2 * kPi * slot / N;
            s += fmt::format("waypoint {} drone {} -> ({:.9f}, {:.9f}, {})\n", w * leg, d, radius * std::cos(ang),
                             radius * std::sin(ang), z);
        }
    }
    return s;
}

/// Random scattered waypoints: every drone gets a fresh random target at each listed time, drawn within
/// max_step of its previous target so legs stay flyable. Targets at one time keep min_spacing apart.
inline std::string scatteredWaypointScore(int N, const std::vector<double>& times, std::uint64_t seed,
                                          const Vec3& lo, const Vec3& hi, double min_spacing, double max_step) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto inBox = [&] {
        return Vec3(lo.x() + unit(rng) * (hi.x() - lo.x()), lo.y() + unit(rng) * (hi.y() - lo.y()),
                    lo.z() + unit(rng) * (hi.z() - lo.z()));
    };
    std::string s = fmt::format("drones {}\n", N);
    std::vector<Vec3> prev;
    for (double t : times) {
        std::vector<Vec3> pts;
        for (int d = 0; d < N; ++d) {
            for (int attempt = 0;; ++attempt) {
                Vec3 p = inBox();
                if (!prev.empty()) {
                    const Vec3& q = prev[static_cast<std::size_t>(d)];
                    Vec3 step = p - q;
                    if (step.norm() > max_step) step *= max_step * unit(rng) / step.norm();
                    p = q + step;
                }
                bool ok = true;
                for (const auto& o : pts) ok = ok && (p - o).norm() >= min_spacing;
                if (ok || attempt > 1000) {
                    pts.push_back(p);
                    break;
                }
            }
        }
        for (int d = 0; d < N; ++d) {
            const Vec3& p = pts[static_cast<std::size_t>(d)];
            s += fmt::format("waypoint {} drone {} -> ({:.6f}, {:.6f}, {:.6f})\n", t, d, p.x(), p.y(), p.z());
        }
        prev = std::move(pts);
    }
    return s;
}

inline swarmchor::ReferenceSet compile(const std::string& text, const swarmchor::BeatTimeline& beats,
                                       const swarmchor::CompileOptions& options = {}) {
    const auto parsed = swarmchor::parseScore(text);
    if (!parsed.ok()) throw std::runtime_error(parsed.errors.toText());
    return swarmchor::compileScore(parsed.score, beats, options);
}

/// Smallest ||p_i - p_j||_{Theta^-1} over all steps and pairs.
inline double minEllipsoid(const std::vector<std::vector<Vec3>>& pos, const swarmchor::PhysicalLimits& limits) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pos.front().size(); ++k) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
            for (std::size_t j = i + 1; j < pos.size(); ++j) {
                const Vec3 d = pos[i][k] - pos[j][k];
                m = std::min(m, d.cwiseQuotient(limits.ellipsoid_radii).norm());
            }
        }
    }
    return m;
}

}  // namespace oracle
