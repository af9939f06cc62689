#include "swarmchor/simkit.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace swarmchor {
namespace {

template <class F>
std::vector<std::vector<Vec3>> project(const SimTrace& trace, F f) {
    std::vector<std::vector<Vec3>> out(trace.states.size());
    for (std::size_t d = 0; d < trace.states.size(); ++d) {
        out[d].reserve(trace.states[d].size());
        for (const auto& s : trace.states[d]) out[d].push_back(f(s));
    }
    return out;
}

void requireRectangular(const std::vector<std::vector<Vec3>>& series, const char* who) {
    for (const auto& row : series) {
        if (row.size() != series.front().size()) throw std::invalid_argument(std::string(who) + ": ragged series");
    }
}

}  // namespace

std::vector<std::vector<Vec3>> SimTrace::positions() const {
    return project(*this, [](const DroneState& s) { return s.p; });
}

std::vector<std::vector<Vec3>> SimTrace::velocities() const {
    return project(*this, [](const DroneState& s) { return s.v; });
}

SimTrace simulate(const CertifiedPerformance& certified, const ClosedLoopModel& model, std::vector<DroneState> initial,
                  const SimOptions& options) {
    if (std::abs(certified.dt - model.dt) > 1e-9) throw std::invalid_argument("simulate: grid dt differs from the model dt");
    if (options.disturbance < 0.0) throw std::invalid_argument("simulate: disturbance must be non-negative");
    const int N = certified.drones();
    const int T = certified.steps();
    if (initial.empty()) {
        for (int n = 0; n < N; ++n) {
            const auto un = static_cast<std::size_t>(n);
            const Vec3 v = certified.velocities.size() == certified.positions.size() && T > 0
                               ? certified.velocities[un].front()
                               : Vec3::Zero();
            initial.push_back({certified.positions[un].front(), v});
        }
    }
    if (static_cast<int>(initial.size()) != N) throw std::invalid_argument("simulate: one initial state per drone");

    SimTrace trace;
    trace.dt = certified.dt;
    trace.t0 = certified.t0;
    trace.disturbance = options.disturbance;
    trace.states.assign(static_cast<std::size_t>(N), {});

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double dt = model.dt;
    for (int n = 0; n < N; ++n) {
        const auto un = static_cast<std::size_t>(n);
        auto& row = trace.states[un];
        row.reserve(static_cast<std::size_t>(T));
        DroneState x = initial[un];
        for (int k = 0; k < T; ++k) {
            row.push_back(x);
            if (k + 1 == T) break;
            x = model.step(x, certified.inputs[un][static_cast<std::size_t>(k)]);
            if (options.disturbance > 0.0) {
                // Uniform in the ball of radius `disturbance`, held over the step.
                Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
                const double norm = dir.norm();
                const Vec3 a = norm > 0.0 ? Vec3(dir / norm * options.disturbance * std::cbrt(unit(rng))) : Vec3::Zero();
                x.p += 0.5 * a * dt * dt;
                x.v += a * dt;
            }
        }
    }
    return trace;
}

std::vector<PairDistance> minInterAgentSeries(const std::vector<std::vector<Vec3>>& positions,
                                              const PhysicalLimits& limits) {
    if (positions.size() < 2) throw std::invalid_argument("minInterAgentSeries: needs at least two drones");
    requireRectangular(positions, "minInterAgentSeries");
    const std::size_t N = positions.size();
    const std::size_t T = positions.front().size();
    std::vector<PairDistance> out(T, {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
    for (std::size_t k = 0; k < T; ++k) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = i + 1; j < N; ++j) {
                out[k].euclidean = std::min(out[k].euclidean, (positions[i][k] - positions[j][k]).norm());
                out[k].ellipsoid = std::min(out[k].ellipsoid, limits.ellipsoidDistance(positions[i][k], positions[j][k]));
            }
        }
    }
    return out;
}

std::vector<PairDistance> minInterAgentSeries(const SimTrace& trace, const PhysicalLimits& limits) {
    return minInterAgentSeries(trace.positions(), limits);
}

std::vector<PairDistance> minInterAgentSeries(const ReferenceSet& refs, const PhysicalLimits& limits) {
    return minInterAgentSeries(refs.positions, limits);
}

DeviationStats deviationStats(const std::vector<std::vector<Vec3>>& raw, const std::vector<std::vector<Vec3>>& certified) {
    if (raw.size() != certified.size()) throw std::invalid_argument("deviationStats: drone counts differ");
    requireRectangular(raw, "deviationStats");
    requireRectangular(certified, "deviationStats");
    if (!raw.empty() && raw.front().size() != certified.front().size()) {
        throw std::invalid_argument("deviationStats: grid lengths differ");
    }
    DeviationStats s;
    const std::size_t T = raw.empty() ? 0 : raw.front().size();
    s.series_cm.assign(T, 0.0);
    double total = 0.0;
    for (std::size_t d = 0; d < raw.size(); ++d) {
        double sum = 0.0, mx = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
            const double e = 100.0 * (raw[d][k] - certified[d][k]).norm();
            sum += e;
            mx = std::max(mx, e);
            s.series_cm[k] = std::max(s.series_cm[k], e);
        }
        s.mean_cm.push_back(T ? sum / double(T) : 0.0);
        s.max_cm.push_back(mx);
        total += s.mean_cm.back();
        s.overall_max_cm = std::max(s.overall_max_cm, mx);
    }
    s.overall_mean_cm = raw.empty() ? 0.0 : total / double(raw.size());
    return s;
}

DeviationStats deviationStats(const ReferenceSet& raw, const CertifiedPerformance& certified) {
    if (std::abs(raw.dt - certified.dt) > 1e-9 || std::abs(raw.t0 - certified.t0) > 1e-9) {
        throw std::invalid_argument("deviationStats: grids are not aligned");
    }
    return deviationStats(raw.positions, certified.positions);
}

std::vector<int> SpeedProfile::extrema() const {
    std::vector<int> all = maxima;
    all.insert(all.end(), minima.begin(), minima.end());
    std::sort(all.begin(), all.end());
    return all;
}

SpeedProfile speedProfile(const std::vector<std::vector<Vec3>>& velocities, double dt, double t0,
                          const SpeedProfileOptions& options) {
    requireRectangular(velocities, "speedProfile");
    SpeedProfile prof;
    prof.dt = dt;
    prof.t0 = t0;
    const std::size_t T = velocities.empty() ? 0 : velocities.front().size();
    prof.mean_speed.assign(T, 0.0);
    for (std::size_t k = 0; k < T; ++k) {
        for (const auto& row : velocities) prof.mean_speed[k] += row[k].norm();
        prof.mean_speed[k] /= double(velocities.size());
    }
    if (T < 3) return prof;

    // Alternating extrema with a prominence threshold (hysteresis peak/valley scan).
    const auto& s = prof.mean_speed;
    int cand = 0;
    bool seeking_max = s[1] >= s[0];
    int last_kind = 0;  // +1 after a maximum, -1 after a minimum
    double anchor = s[0];
    for (int k = 1; k < static_cast<int>(T); ++k) {
        const double v = s[static_cast<std::size_t>(k)];
        if (seeking_max) {
            if (v >= s[static_cast<std::size_t>(cand)]) cand = k;
            if (s[static_cast<std::size_t>(cand)] - v >= options.min_prominence && s[static_cast<std::size_t>(cand)] - anchor >= options.min_prominence) {
                if (last_kind != 1) prof.maxima.push_back(cand);
                last_kind = 1;
                anchor = s[static_cast<std::size_t>(cand)];
                seeking_max = false;
                cand = k;
            }
        } else {
            if (v <= s[static_cast<std::size_t>(cand)]) cand = k;
            if (v - s[static_cast<std::size_t>(cand)] >= options.min_prominence && anchor - s[static_cast<std::size_t>(cand)] >= options.min_prominence) {
                if (last_kind != -1) prof.minima.push_back(cand);
                last_kind = -1;
                anchor = s[static_cast<std::size_t>(cand)];
                seeking_max = true;
                cand = k;
            }
        }
    }
    return prof;
}

SpeedProfile speedProfile(const SimTrace& trace, const SpeedProfileOptions& options) {
    return speedProfile(trace.velocities(), trace.dt, trace.t0, options);
}

double beatProximity(const SpeedProfile& profile, const std::vector<double>& beat_times, double window) {
    const std::vector<int> ext = profile.extrema();
    if (ext.empty()) return 0.0;
    std::vector<double> beats = beat_times;
    std::sort(beats.begin(), beats.end());
    int near = 0;
    for (int k : ext) {
        const double t = profile.t0 + k * profile.dt;
        const auto it = std::lower_bound(beats.begin(), beats.end(), t - window);
        near += it != beats.end() && *it <= t + window ? 1 : 0;
    }
    return double(near) / double(ext.size());
}

std::vector<PermutationTrial> beatPermutationTest(const SpeedProfile& profile, const std::vector<double>& beat_times,
                                                  double window, const std::vector<std::uint64_t>& seeds) {
    const double lo = profile.t0;
    const double hi = profile.t0 + (static_cast<double>(profile.mean_speed.size()) - 1.0) * profile.dt;
    const double truth = beatProximity(profile, beat_times, window);
    std::vector<PermutationTrial> out;
    for (std::uint64_t seed : seeds) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(lo, hi);
        std::vector<double> fake(beat_times.size());
        for (auto& t : fake) t = u(rng);
        out.push_back({seed, truth, beatProximity(profile, fake, window)});
    }
    return out;
}

MetricsReport computeMetrics(const ReferenceSet& raw, const CertifiedPerformance& certified,
                             const PhysicalLimits& limits) {
    MetricsReport m;
    m.deviation = deviationStats(raw, certified);
    if (raw.drones() >= 2) {
        m.raw_distance = minInterAgentSeries(raw, limits);
        m.certified_distance = minInterAgentSeries(certified.positions, limits);
        for (const auto& d : m.raw_distance) m.raw_violations += d.ellipsoid * d.ellipsoid < 1.0 - 1e-3 ? 1 : 0;
        for (const auto& d : m.certified_distance) m.violations += d.ellipsoid * d.ellipsoid < 1.0 - 1e-3 ? 1 : 0;
    }
    m.speed = speedProfile(certified.velocities, certified.dt, certified.t0);
    std::size_t count = 0;
    for (const auto& row : certified.diagnostics) {
        for (const auto& d : row) {
            m.mean_solve_ms += d.solve_ms;
            m.max_solve_ms = std::max(m.max_solve_ms, d.solve_ms);
            ++count;
        }
    }
    if (count) m.mean_solve_ms /= double(count);
    return m;
}

nlohmann::json metricsToJson(const MetricsReport& r) {
    auto minOf = [](const std::vector<PairDistance>& s, bool ellipsoid) -> nlohmann::json {
        if (s.empty()) return nullptr;
        double v = std::numeric_limits<double>::infinity();
        for (const auto& d : s) v = std::min(v, ellipsoid ? d.ellipsoid : d.euclidean);
        return v;
    };
    nlohmann::json per_drone = nlohmann::json::array();
    for (std::size_t d = 0; d < r.deviation.mean_cm.size(); ++d) {
        per_drone.push_back({{"drone", d}, {"mean_cm", r.deviation.mean_cm[d]}, {"max_cm", r.deviation.max_cm[d]}});
    }
    double mean_speed = 0.0;
    for (double v : r.speed.mean_speed) mean_speed += v;
    if (!r.speed.mean_speed.empty()) mean_speed /= double(r.speed.mean_speed.size());
    return {
        {"raw_min_distance_m", minOf(r.raw_distance, false)},
        {"raw_min_ellipsoid", minOf(r.raw_distance, true)},
        {"certified_min_distance_m", minOf(r.certified_distance, false)},
        {"certified_min_ellipsoid", minOf(r.certified_distance, true)},
        {"raw_violation_steps", r.raw_violations},
        {"violation_steps", r.violations},
        {"mean_deviation_cm", r.deviation.overall_mean_cm},
        {"max_deviation_cm", r.deviation.overall_max_cm},
        {"deviation", per_drone},
        {"mean_speed", mean_speed},
        {"speed_maxima", r.speed.maxima},
        {"speed_minima", r.speed.minima},
        {"mean_solve_ms", r.mean_solve_ms},
        {"max_solve_ms", r.max_solve_ms},
    };
}

void writeMetricsCsv(const std::filesystem::path& path, const MetricsReport& r, double t0, double dt) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,raw_min_m,raw_min_ellipsoid,cert_min_m,cert_min_ellipsoid,max_deviation_cm,mean_speed\n";
    const std::size_t T = r.deviation.series_cm.size();
    for (std::size_t k = 0; k < T; ++k) {
        const bool pairs = k < r.raw_distance.size() && k < r.certified_distance.size();
        out << fmt::format("{},{},{},{},{},{},{}\n", t0 + double(k) * dt,
                           pairs ? fmt::format("{}", r.raw_distance[k].euclidean) : "",
                           pairs ? fmt::format("{}", r.raw_distance[k].ellipsoid) : "",
                           pairs ? fmt::format("{}", r.certified_distance[k].euclidean) : "",
                           pairs ? fmt::format("{}", r.certified_distance[k].ellipsoid) : "", r.deviation.series_cm[k],
                           k < r.speed.mean_speed.size() ? r.speed.mean_speed[k] : 0.0);
    }
}

void writeTraceCsv(const std::filesystem::path& path, const SimTrace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,drone,x,y,z,v_x,v_y,v_z\n";
    for (int k = 0; k < trace.steps(); ++k) {
        for (int d = 0; d < trace.drones(); ++d) {
            const DroneState& s = trace.states[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
            out << fmt::format("{},{},{},{},{},{},{},{}\n", trace.timeAt(k), d, s.p.x(), s.p.y(), s.p.z(), s.v.x(),
                               s.v.y(), s.v.z());
        }
    }
}

}  // namespace swarmchor
