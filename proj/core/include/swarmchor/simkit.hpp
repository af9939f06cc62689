#pragma once

#include "swarmchor/choreography.hpp"
#include "swarmchor/core.hpp"
#include "swarmchor/filter.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace swarmchor {

struct SimTrace {
    double dt = 0.1;
    double t0 = 0.0;
    /// states[drone][k]
    std::vector<std::vector<DroneState>> states;
    double disturbance = 0.0;

    int steps() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
    int drones() const { return static_cast<int>(states.size()); }
    double timeAt(int k) const { return t0 + k * dt; }
    std::vector<std::vector<Vec3>> positions() const;
    std::vector<std::vector<Vec3>> velocities() const;
};

struct SimOptions {
    /// Bound on the random acceleration added each step (m/s^2).
    double disturbance = 0.0;
    std::uint64_t seed = 0;
};

/// x_{k+1} = A x_k + B u_k (+ disturbance). Initial states default to the certified state at k = 0.
SimTrace simulate(const CertifiedPerformance& certified, const ClosedLoopModel& model,
                  std::vector<DroneState> initial = {}, const SimOptions& options = {});

struct PairDistance {
    double euclidean = 0.0;
    double ellipsoid = 0.0;  ///< ||p_i - p_j||_{Theta^-1}
};

/// Per step, the minimum of each metric over unordered pairs. Throws for fewer than two drones.
std::vector<PairDistance> minInterAgentSeries(const std::vector<std::vector<Vec3>>& positions,
                                              const PhysicalLimits& limits);
std::vector<PairDistance> minInterAgentSeries(const SimTrace& trace, const PhysicalLimits& limits);
std::vector<PairDistance> minInterAgentSeries(const ReferenceSet& refs, const PhysicalLimits& limits);

struct DeviationStats {
    std::vector<double> mean_cm;  ///< per drone
    std::vector<double> max_cm;
    /// Per step, the largest deviation over drones (cm).
    std::vector<double> series_cm;
    double overall_mean_cm = 0.0;
    double overall_max_cm = 0.0;
};

/// Euclidean distance between raw and certified positions at every grid step.
DeviationStats deviationStats(const ReferenceSet& raw, const CertifiedPerformance& certified);
DeviationStats deviationStats(const std::vector<std::vector<Vec3>>& raw, const std::vector<std::vector<Vec3>>& certified);

struct SpeedProfile {
    double dt = 0.1;
    double t0 = 0.0;
    std::vector<double> mean_speed;
    std::vector<int> maxima;
    std::vector<int> minima;

    /// Maxima and minima, sorted.
    std::vector<int> extrema() const;
};

struct SpeedProfileOptions {
    /// An extremum must differ from the neighbouring opposite extrema by this much (m/s).
    double min_prominence = 0.05;
};

SpeedProfile speedProfile(const std::vector<std::vector<Vec3>>& velocities, double dt, double t0,
                          const SpeedProfileOptions& options = {});
SpeedProfile speedProfile(const SimTrace& trace, const SpeedProfileOptions& options = {});

/// Fraction of extrema lying within `window` seconds of some beat.
double beatProximity(const SpeedProfile& profile, const std::vector<double>& beat_times, double window);

struct PermutationTrial {
    std::uint64_t seed = 0;
    double true_fraction = 0.0;
    double shuffled_fraction = 0.0;
    bool pass() const { return true_fraction > shuffled_fraction; }
};

/// Compares beatProximity against beat sets of the same size drawn uniformly over the
/// profile's time span, one draw per seed.
std::vector<PermutationTrial> beatPermutationTest(const SpeedProfile& profile, const std::vector<double>& beat_times,
                                                  double window, const std::vector<std::uint64_t>& seeds);

struct MetricsReport {
    std::vector<PairDistance> raw_distance;
    std::vector<PairDistance> certified_distance;
    DeviationStats deviation;
    SpeedProfile speed;
    /// Steps where the certified ellipsoid distance squared drops below 1 - 1e-3.
    int violations = 0;
    int raw_violations = 0;
    double mean_solve_ms = 0.0;
    double max_solve_ms = 0.0;
};

/// Solve-time fields stay zero when the certified run carries no diagnostics (e.g. read from CSV).
MetricsReport computeMetrics(const ReferenceSet& raw, const CertifiedPerformance& certified,
                             const PhysicalLimits& limits);

nlohmann::json metricsToJson(const MetricsReport& report);
/// Per step: t, raw_min_m, raw_min_ellipsoid, cert_min_m, cert_min_ellipsoid, max_deviation_cm, mean_speed
void writeMetricsCsv(const std::filesystem::path& path, const MetricsReport& report, double t0, double dt);
void writeTraceCsv(const std::filesystem::path& path, const SimTrace& trace);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    /// Dashed horizontal reference lines.
    std::vector<double> thresholds;
    /// Dotted vertical markers (e.g. beat times).
    std::vector<double> markers;
    int width = 720;
    int height = 360;
};

/// Static SVG line chart.
std::string renderLineChart(const ChartSpec& spec);
void writeSvg(const std::filesystem::path& path, const ChartSpec& spec);

}  // namespace swarmchor
