#include "swarmchor/filter.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace swarmchor {

void writeCertifiedCsv(const std::filesystem::path& path, const CertifiedPerformance& perf) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,drone,x,y,z,u_x,u_y,u_z\n";
    for (int k = 0; k < perf.steps(); ++k) {
        for (int d = 0; d < perf.drones(); ++d) {
            const Vec3& p = perf.positions[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
            const Vec3& u = perf.inputs[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
            out << fmt::format("{},{},{},{},{},{},{},{}\n", perf.timeAt(k), d, p.x(), p.y(), p.z(), u.x(), u.y(),
                               u.z());
        }
    }
}

CertifiedPerformance readCertifiedCsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("t,drone,x,y,z,u_x,u_y,u_z", 0) != 0) throw std::runtime_error(path.string() + ": unexpected header");

    std::vector<double> times;
    std::map<int, std::pair<std::vector<Vec3>, std::vector<Vec3>>> rows;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != 8) throw std::runtime_error(fmt::format("{}:{}: expected 8 columns", path.string(), row_no));
        if (times.empty() || v[0] > times.back() + 1e-9) times.push_back(v[0]);
        const int d = static_cast<int>(v[1]);
        auto& [pos, inp] = rows[d];
        if (pos.size() + 1 != times.size()) {
            throw std::runtime_error(fmt::format("{}:{}: drone {} is missing samples", path.string(), row_no, d));
        }
        pos.emplace_back(v[2], v[3], v[4]);
        inp.emplace_back(v[5], v[6], v[7]);
    }
    CertifiedPerformance perf;
    if (times.empty()) return perf;
    perf.t0 = times.front();
    perf.dt = times.size() > 1 ? (times.back() - times.front()) / double(times.size() - 1) : 0.1;
    for (auto& [d, row] : rows) {
        if (d != perf.drones() || row.first.size() != times.size()) {
            throw std::runtime_error(path.string() + ": drone rows are not contiguous or have unequal length");
        }
        perf.positions.push_back(std::move(row.first));
        perf.inputs.push_back(std::move(row.second));
    }
    // Velocities are not stored; central differences of the positions.
    perf.velocities.resize(perf.positions.size());
    for (std::size_t d = 0; d < perf.positions.size(); ++d) {
        const auto& p = perf.positions[d];
        auto& v = perf.velocities[d];
        v.assign(p.size(), Vec3::Zero());
        for (std::size_t k = 0; k < p.size() && p.size() > 1; ++k) {
            const std::size_t a = k == 0 ? 0 : k - 1;
            const std::size_t b = std::min(k + 1, p.size() - 1);
            v[k] = (p[b] - p[a]) / (double(b - a) * perf.dt);
        }
    }
    return perf;
}

nlohmann::json diagnosticsToJson(const CertifiedPerformance& perf, const ReferenceSet& refs,
                                 const PhysicalLimits& limits) {
    if (refs.drones() != perf.drones() || refs.steps() != perf.steps()) {
        throw std::invalid_argument("diagnosticsToJson: reference and certified grids differ");
    }
    const int N = perf.drones();
    const int T = perf.steps();

    nlohmann::json steps = nlohmann::json::array();
    double worst_collision = 0.0, worst_thrust = 0.0, worst_velocity = 0.0, worst_position = 0.0;
    int pin_conflicts = 0;
    for (int k = 0; k < static_cast<int>(perf.diagnostics.size()); ++k) {
        const auto& row = perf.diagnostics[static_cast<std::size_t>(k)];
        nlohmann::json drones = nlohmann::json::array();
        for (const auto& d : row) {
            worst_collision = std::max(worst_collision, d.res_collision);
            worst_thrust = std::max(worst_thrust, d.res_thrust);
            worst_velocity = std::max(worst_velocity, d.res_velocity);
            worst_position = std::max(worst_position, d.res_position);
            pin_conflicts += d.pin_conflict ? 1 : 0;
            nlohmann::json j = {{"iterations", d.iterations},       {"res_collision", d.res_collision},
                                {"res_thrust", d.res_thrust},       {"res_velocity", d.res_velocity},
                                {"res_position", d.res_position},   {"res_fixed", d.res_fixed},
                                {"pin_error", d.pin_error},         {"rho", d.rho},
                                {"converged", d.converged}};
            if (d.pin_conflict) j["conflicting_pins"] = d.conflicting_pins;
            drones.push_back(std::move(j));
        }
        steps.push_back({{"k", k}, {"t", perf.timeAt(k)}, {"drones", std::move(drones)}});
    }

    // Audit of the certified trajectory itself.
    double min_ellipsoid = std::numeric_limits<double>::infinity();
    double min_euclid = std::numeric_limits<double>::infinity();
    int violations = 0;
    double max_speed = 0.0;
    for (int k = 0; k < T; ++k) {
        bool violated = false;
        for (int i = 0; i < N; ++i) {
            const Vec3& pi = perf.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
            max_speed = std::max(max_speed, perf.velocities[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].norm());
            for (int j = i + 1; j < N; ++j) {
                const Vec3& pj = perf.positions[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                const double e = limits.ellipsoidDistance(pi, pj);
                min_ellipsoid = std::min(min_ellipsoid, e);
                min_euclid = std::min(min_euclid, (pi - pj).norm());
                violated = violated || e * e < 1.0 - 1e-3;
            }
        }
        violations += violated ? 1 : 0;
    }

    nlohmann::json deviation = nlohmann::json::array();
    double dev_sum = 0.0, dev_max = 0.0;
    for (int d = 0; d < N; ++d) {
        double sum = 0.0, mx = 0.0;
        for (int k = 0; k < T; ++k) {
            const double e = (perf.positions[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] - refs.at(d, k)).norm();
            sum += e;
            mx = std::max(mx, e);
        }
        const double mean = T > 0 ? sum / T : 0.0;
        dev_sum += mean;
        dev_max = std::max(dev_max, mx);
        deviation.push_back({{"drone", d}, {"mean_cm", 100.0 * mean}, {"max_cm", 100.0 * mx}});
    }

    double pin_max = 0.0;
    int pins_converged = 0;
    for (const auto& r : perf.pin_records) {
        if (!r.converged) continue;
        ++pins_converged;
        pin_max = std::max(pin_max, r.error);
    }

    nlohmann::json summary = {
        {"drones", N},
        {"steps", T},
        {"dt", perf.dt},
        {"non_converged", perf.nonConverged()},
        {"non_converged_fraction", perf.nonConvergedFraction()},
        {"failed", perf.failed()},
        {"pin_conflicts", pin_conflicts},
        {"max_res_collision", worst_collision},
        {"max_res_thrust", worst_thrust},
        {"max_res_velocity", worst_velocity},
        {"max_res_position", worst_position},
        {"min_ellipsoid_distance", N > 1 ? nlohmann::json(min_ellipsoid) : nlohmann::json(nullptr)},
        {"min_distance_m", N > 1 ? nlohmann::json(min_euclid) : nlohmann::json(nullptr)},
        {"ellipsoid_violation_steps", violations},
        {"max_speed", max_speed},
        {"mean_deviation_cm", N > 0 ? 100.0 * dev_sum / N : 0.0},
        {"max_deviation_cm", 100.0 * dev_max},
        {"pins", perf.pin_records.size()},
        {"pins_converged", pins_converged},
        {"max_pin_error_m", pin_max},
        {"max_snap_s", refs.max_snap},
    };
    return {{"summary", std::move(summary)}, {"deviation", std::move(deviation)}, {"steps", std::move(steps)}};
}

nlohmann::json timingsToJson(const CertifiedPerformance& perf) {
    nlohmann::json per_step = nlohmann::json::array();
    double total = 0.0, worst = 0.0;
    std::size_t count = 0;
    for (const auto& row : perf.diagnostics) {
        nlohmann::json ms = nlohmann::json::array();
        for (const auto& d : row) {
            ms.push_back(d.solve_ms);
            total += d.solve_ms;
            worst = std::max(worst, d.solve_ms);
            ++count;
        }
        per_step.push_back(std::move(ms));
    }
    return {{"mean_ms_per_drone", count ? total / double(count) : 0.0},
            {"max_ms_per_drone", worst},
            {"total_ms", total},
            {"solve_ms", std::move(per_step)}};
}

}  // namespace swarmchor
