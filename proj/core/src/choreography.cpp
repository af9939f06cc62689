#include "swarmchor/choreography.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace swarmchor {

bool ValidationReport::has(FailureCode code) const {
    return std::any_of(failures.begin(), failures.end(), [&](const auto& f) { return f.code == code; });
}

std::string ValidationReport::toText() const {
    std::string out;
    for (const auto& f : failures) {
        out += toString(f.code);
        if (f.line > 0) out += fmt::format(" [line {}]", f.line);
        if (f.segment >= 0) out += fmt::format(" [segment {}]", f.segment);
        if (f.beat) out += fmt::format(" [t={}]", *f.beat);
        if (!f.drones.empty()) out += fmt::format(" [drones {}]", fmt::join(f.drones, ","));
        out += ": " + f.message + "\n";
    }
    return out;
}

nlohmann::json ValidationReport::toJson() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : failures) {
        out.push_back({{"code", std::string(toString(f.code))},
                       {"line", f.line},
                       {"segment", f.segment},
                       {"beat", f.beat ? nlohmann::json(*f.beat) : nlohmann::json(nullptr)},
                       {"drones", f.drones},
                       {"message", f.message}});
    }
    return out;
}

bool ReferenceSet::isPinned(int k) const { return std::binary_search(pins.begin(), pins.end(), k); }

namespace {

bool layoutArgsWellFormed(const LayoutDirective& layout) {
    auto isCount = [](double v) { return v >= 1.0 && v == std::floor(v) && v <= 10000.0; };
    if (layout.kind == LayoutDirective::Kind::Circle) {
        return layout.args.size() >= 2 && layout.args.size() <= 3 && isCount(layout.args[0]) && layout.args[1] > 0.0;
    }
    return layout.args.size() >= 3 && layout.args.size() <= 4 && isCount(layout.args[0]) &&
           isCount(layout.args[1]) && layout.args[2] > 0.0;
}

std::vector<int> allDrones(int n) {
    std::vector<int> ids(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
    return ids;
}

/// Per-segment anchors: explicit layouts, or the previous segment's end poses.
/// Entries stay empty when they cannot be derived (an earlier error was reported).
std::vector<std::vector<Configuration>> segmentAnchors(const Score& score, const PhysicalLimits& limits) {
    const auto& lib = PrimitiveLibrary::builtin();
    std::vector<std::vector<Configuration>> anchors(score.segments.size());
    std::vector<Configuration> previous_end;
    for (std::size_t s = 0; s < score.segments.size(); ++s) {
        const auto& seg = score.segments[s];
        std::vector<Configuration> start;
        if (seg.layout) {
            try {
                start = seg.layout->anchors(limits);
            } catch (const std::exception&) {
                start.clear();
            }
        } else {
            start = previous_end;
        }
        anchors[s] = start;
        previous_end.clear();
        const PrimitiveDefinition* def = lib.find(seg.primitive.name);
        if (def == nullptr || start.empty()) continue;
        try {
            for (const auto& c : start) {
                const GeneratorTerms g = primitiveTerms(*def, seg.primitive, c);
                previous_end.push_back({g.eval(seg.primitive.t_f - seg.primitive.t_i)});
            }
        } catch (const std::exception&) {
            previous_end.clear();
        }
    }
    return anchors;
}

void validatePrimitives(const Score& score, const BeatTimeline& beats, const PhysicalLimits& limits,
                        const ValidationOptions& options, ValidationReport& report) {
    const auto& lib = PrimitiveLibrary::builtin();
    const int n = score.swarmSize();
    const auto anchors = segmentAnchors(score, limits);

    if (score.segments.front().layout == std::nullopt) {
        report.add({FailureCode::CoverageGap, score.segments.front().line, 0, score.segments.front().primitive.t_i, {},
                    "the first segment needs a layout to place the swarm"});
    }

    for (std::size_t s = 0; s < score.segments.size(); ++s) {
        const auto& seg = score.segments[s];
        const auto& spec = seg.primitive;
        const int si = static_cast<int>(s);
        bool usable = true;

        const PrimitiveDefinition* def = lib.find(spec.name);
        if (def == nullptr) {
            report.add({FailureCode::UnknownPrimitive, seg.line, si, std::nullopt, {},
                        "unknown primitive '" + spec.name + "'"});
            usable = false;
        } else {
            try {
                resolveParameters(*def, spec.parameters);
            } catch (const ParameterError& e) {
                report.add({FailureCode::BadParameter, seg.line, si, std::nullopt, {}, e.what()});
                usable = false;
            }
        }
        if (!(spec.t_f > spec.t_i)) {
            report.add({FailureCode::BadParameter, seg.line, si, spec.t_i, {},
                        fmt::format("segment ends at {} s, not after its start {} s", spec.t_f, spec.t_i)});
            usable = false;
        }
        for (double t : {spec.t_i, spec.t_f}) {
            if (!beats.find(t, options.beat_tolerance)) {
                report.add({FailureCode::BeatNotInTimeline, seg.line, si, t, {},
                            fmt::format("t={} s is not a beat (tolerance {} s)", t, options.beat_tolerance)});
            }
        }
        if (s > 0 && spec.t_i < score.segments[s - 1].primitive.t_f - options.beat_tolerance) {
            report.add({FailureCode::CoverageGap, seg.line, si, spec.t_i, {},
                        fmt::format("segment starts at {} s before the previous one ends at {} s", spec.t_i,
                                    score.segments[s - 1].primitive.t_f)});
        }

        if (seg.layout) {
            if (!layoutArgsWellFormed(*seg.layout)) {
                report.add({FailureCode::BadParameter, seg.line, si, std::nullopt, {},
                            "malformed layout " + seg.layout->toString()});
                continue;
            }
            if (seg.layout->droneCount() != n) {
                report.add({FailureCode::CoverageGap, seg.line, si, std::nullopt, {},
                            fmt::format("layout {} places {} drones, the swarm has {}", seg.layout->toString(),
                                        seg.layout->droneCount(), n)});
                usable = false;
            }
            try {
                seg.layout->anchors(limits);
            } catch (const LayoutError& e) {
                report.add({FailureCode::LimitViolation, seg.line, si, std::nullopt, {}, e.what()});
                usable = false;
            }
        }
        if (!usable || anchors[s].empty()) continue;

        const FeasibilityReport feas = checkPrimitiveFeasibility(*def, spec, anchors[s], limits, options.feasibility);
        for (const auto& msg : feas.failures) {
            report.add({FailureCode::LimitViolation, seg.line, si, std::nullopt, allDrones(n), msg});
        }
    }
}

void validateWaypoints(const Score& score, const BeatTimeline& beats, const PhysicalLimits& limits,
                       const ValidationOptions& options, ValidationReport& report) {
    const int n = score.swarmSize();

    // Group by beat, merging times within the beat tolerance.
    std::map<double, std::vector<const WaypointTarget*>> by_time;
    for (const auto& w : score.waypoints) {
        auto it = std::find_if(by_time.begin(), by_time.end(),
                               [&](const auto& kv) { return std::abs(kv.first - w.t) <= options.beat_tolerance; });
        if (it == by_time.end()) it = by_time.emplace(w.t, std::vector<const WaypointTarget*>{}).first;
        it->second.push_back(&w);
    }

    for (const auto& [t, group] : by_time) {
        if (!beats.find(t, options.beat_tolerance)) {
            report.add({FailureCode::BeatNotInTimeline, group.front()->line, -1, t, {},
                        fmt::format("t={} s is not a beat (tolerance {} s)", t, options.beat_tolerance)});
        }
        std::vector<const WaypointTarget*> per_drone(static_cast<std::size_t>(std::max(n, 0)), nullptr);
        for (const auto* w : group) {
            if (w->drone < 0 || w->drone >= n) {
                report.add({FailureCode::BadParameter, w->line, -1, t, {w->drone},
                            fmt::format("drone index {} outside 0..{}", w->drone, n - 1)});
                continue;
            }
            if (per_drone[static_cast<std::size_t>(w->drone)] != nullptr) {
                report.add({FailureCode::BadParameter, w->line, -1, t, {w->drone},
                            fmt::format("drone {} has two targets at t={} s", w->drone, t)});
                continue;
            }
            per_drone[static_cast<std::size_t>(w->drone)] = w;
            if (!limits.insideArena(w->target)) {
                report.add({FailureCode::LimitViolation, w->line, -1, t, {w->drone},
                            fmt::format("target ({}, {}, {}) is outside the arena", w->target.x(), w->target.y(),
                                        w->target.z())});
            }
        }
        std::vector<int> missing;
        for (int d = 0; d < n; ++d) {
            if (per_drone[static_cast<std::size_t>(d)] == nullptr) missing.push_back(d);
        }
        if (!missing.empty()) {
            report.add({FailureCode::MissingWaypoint, group.front()->line, -1, t, missing,
                        fmt::format("{} of {} drones have no target at t={} s", missing.size(), n, t)});
        }
        for (int a = 0; a < n; ++a) {
            const auto* wa = per_drone[static_cast<std::size_t>(a)];
            if (wa == nullptr) continue;
            for (int b = a + 1; b < n; ++b) {
                const auto* wb = per_drone[static_cast<std::size_t>(b)];
                if (wb != nullptr && (wa->target - wb->target).norm() < options.duplicate_distance) {
                    report.add({FailureCode::DuplicateTarget, wb->line, -1, t, {a, b},
                                fmt::format("drones {} and {} share the target ({}, {}, {})", a, b,
                                            wa->target.x(), wa->target.y(), wa->target.z())});
                }
            }
        }
    }

    // Straight-line legs between consecutive targets must be flyable.
    std::vector<std::vector<const WaypointTarget*>> legs(static_cast<std::size_t>(std::max(n, 0)));
    for (const auto& w : score.waypoints) {
        if (w.drone >= 0 && w.drone < n) legs[static_cast<std::size_t>(w.drone)].push_back(&w);
    }
    const double keep = 1.0 - options.feasibility.margin;
    for (int d = 0; d < n; ++d) {
        auto& seq = legs[static_cast<std::size_t>(d)];
        std::stable_sort(seq.begin(), seq.end(), [](const auto* a, const auto* b) { return a->t < b->t; });
        for (std::size_t i = 1; i < seq.size(); ++i) {
            const double span = seq[i]->t - seq[i - 1]->t;
            if (span <= options.beat_tolerance) continue;
            const double speed = (seq[i]->target - seq[i - 1]->target).norm() / span;
            if (speed > keep * limits.v_max) {
                report.add({FailureCode::LimitViolation, seq[i]->line, -1, seq[i]->t, {d},
                            fmt::format("drone {} needs {:.3f} m/s between t={} s and t={} s, limit {:.3f} m/s", d,
                                        speed, seq[i - 1]->t, seq[i]->t, keep * limits.v_max)});
            }
        }
    }
}

int snapIndex(double t, double t0, double dt) { return static_cast<int>(std::lround((t - t0) / dt)); }

}  // namespace

ValidationReport validateScore(const Score& score, const BeatTimeline& beats, const PhysicalLimits& limits,
                               const ValidationOptions& options) {
    ValidationReport report;
    const bool primitives = score.modality == Modality::Primitives;
    if ((primitives && score.segments.empty()) || (!primitives && score.waypoints.empty())) {
        report.add({FailureCode::CoverageGap, 0, -1, std::nullopt, {}, "the score contains no motion"});
        return report;
    }
    if (score.swarmSize() < 1) {
        report.add({FailureCode::CoverageGap, 0, -1, std::nullopt, {}, "the score does not place any drone"});
        // Still name unknown primitives so a reprompt can fix both problems at once.
        for (std::size_t s = 0; primitives && s < score.segments.size(); ++s) {
            const auto& seg = score.segments[s];
            if (!PrimitiveLibrary::builtin().find(seg.primitive.name)) {
                report.add({FailureCode::UnknownPrimitive, seg.line, static_cast<int>(s), std::nullopt, {},
                            "unknown primitive '" + seg.primitive.name + "'"});
            }
        }
        return report;
    }
    if (options.expected_drones > 0 && score.swarmSize() != options.expected_drones) {
        report.add({FailureCode::CoverageGap, 0, -1, std::nullopt, {},
                    fmt::format("the score covers {} drones, the swarm has {}", score.swarmSize(),
                                options.expected_drones)});
    }
    if (primitives) {
        validatePrimitives(score, beats, limits, options, report);
    } else {
        validateWaypoints(score, beats, limits, options, report);
    }
    return report;
}

ReferenceSet compileScore(const Score& score, const BeatTimeline& beats, const CompileOptions& options) {
    if (!(options.dt > 0.0)) throw std::invalid_argument("compileScore: dt must be positive");
    ValidationReport report = validateScore(score, beats, options.limits, options.validation);
    if (!report.empty()) throw CompileError("score failed validation:\n" + report.toText(), std::move(report));

    ReferenceSet refs;
    refs.dt = options.dt;
    refs.t0 = score.startTime();
    if (!beats.beats.empty()) refs.t0 = std::min(refs.t0, beats.beats.front().time);
    refs.tT = score.endTime();
    const int steps = snapIndex(refs.tT, refs.t0, refs.dt) + 1;
    const int n = score.swarmSize();
    refs.positions.assign(static_cast<std::size_t>(n), std::vector<Vec3>(static_cast<std::size_t>(steps)));

    std::set<int> pins;
    auto pin = [&](double t) {
        const int k = std::clamp(snapIndex(t, refs.t0, refs.dt), 0, steps - 1);
        pins.insert(k);
        refs.max_snap = std::max(refs.max_snap, std::abs(refs.timeAt(k) - t));
    };
    const double tol = options.validation.beat_tolerance;

    if (score.modality == Modality::Primitives) {
        const auto& lib = PrimitiveLibrary::builtin();
        const auto anchors = segmentAnchors(score, options.limits);
        // covered[k] marks samples written by a segment; the rest hold the last pose.
        std::vector<char> covered(static_cast<std::size_t>(steps), 0);
        for (std::size_t s = 0; s < score.segments.size(); ++s) {
            const auto& spec = score.segments[s].primitive;
            const PrimitiveDefinition& def = *lib.find(spec.name);
            const int first = std::clamp(snapIndex(spec.t_i, refs.t0, refs.dt), 0, steps - 1);
            const int last = std::clamp(snapIndex(spec.t_f, refs.t0, refs.dt), 0, steps - 1);
            refs.segments.emplace_back(first, last);
            for (int d = 0; d < n; ++d) {
                const GeneratorTerms g = primitiveTerms(def, spec, anchors[s][static_cast<std::size_t>(d)]);
                for (int k = first; k <= last; ++k) {
                    const double t = std::clamp(refs.timeAt(k), spec.t_i, spec.t_f);
                    refs.positions[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] = g.eval(t - spec.t_i);
                }
            }
            std::fill(covered.begin() + first, covered.begin() + last + 1, 1);
            for (const auto& b : beats.beats) {
                if (b.time >= spec.t_i - tol && b.time <= spec.t_f + tol) pin(b.time);
            }
        }
        const int first_covered = refs.segments.front().first;
        for (int d = 0; d < n; ++d) {
            auto& row = refs.positions[static_cast<std::size_t>(d)];
            for (int k = 0; k < first_covered; ++k) row[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(first_covered)];
            for (int k = first_covered + 1; k < steps; ++k) {
                if (!covered[static_cast<std::size_t>(k)]) row[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(k - 1)];
            }
        }
    } else {
        std::vector<std::map<int, Vec3>> keyframes(static_cast<std::size_t>(n));
        for (const auto& w : score.waypoints) {
            const int k = std::clamp(snapIndex(w.t, refs.t0, refs.dt), 0, steps - 1);
            keyframes[static_cast<std::size_t>(w.drone)][k] = w.target;
            pin(w.t);
        }
        for (int d = 0; d < n; ++d) {
            const auto& keys = keyframes[static_cast<std::size_t>(d)];
            auto& row = refs.positions[static_cast<std::size_t>(d)];
            for (int k = 0; k < steps; ++k) {
                const auto next = keys.lower_bound(k);
                if (next == keys.end()) {
                    row[static_cast<std::size_t>(k)] = std::prev(next)->second;
                } else if (next->first == k || next == keys.begin()) {
                    row[static_cast<std::size_t>(k)] = next->second;
                } else {
                    const auto prev = std::prev(next);
                    const double w = double(k - prev->first) / double(next->first - prev->first);
                    row[static_cast<std::size_t>(k)] = (1.0 - w) * prev->second + w * next->second;
                }
            }
        }
        refs.segments.emplace_back(*pins.begin(), *pins.rbegin());
    }
    refs.pins.assign(pins.begin(), pins.end());
    return refs;
}

void writeReferenceCsv(const std::filesystem::path& path, const ReferenceSet& refs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,drone,x,y,z,pinned\n";
    for (int k = 0; k < refs.steps(); ++k) {
        const int pinned = refs.isPinned(k) ? 1 : 0;
        for (int d = 0; d < refs.drones(); ++d) {
            const Vec3& p = refs.at(d, k);
            out << fmt::format("{},{},{},{},{},{}\n", refs.timeAt(k), d, p.x(), p.y(), p.z(), pinned);
        }
    }
}

ReferenceSet readReferenceCsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("t,drone,x,y,z,pinned", 0) != 0) throw std::runtime_error(path.string() + ": unexpected header");

    std::vector<double> times;
    std::map<int, std::vector<Vec3>> rows;
    std::set<int> pins;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw std::runtime_error(fmt::format("{}:{}: expected 6 columns", path.string(), row_no));
        const double t = std::stod(cells[0]);
        const int d = std::stoi(cells[1]);
        if (times.empty() || t > times.back() + 1e-9) times.push_back(t);
        const int k = static_cast<int>(times.size()) - 1;
        auto& row = rows[d];
        if (static_cast<int>(row.size()) != k) {
            throw std::runtime_error(fmt::format("{}:{}: drone {} is missing samples", path.string(), row_no, d));
        }
        row.emplace_back(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
        if (std::stoi(cells[5]) != 0) pins.insert(k);
    }
    ReferenceSet refs;
    if (times.empty()) return refs;
    refs.t0 = times.front();
    refs.tT = times.back();
    refs.dt = times.size() > 1 ? (times.back() - times.front()) / double(times.size() - 1) : 0.1;
    for (auto& [d, row] : rows) {
        if (d != refs.drones() || row.size() != times.size()) {
            throw std::runtime_error(path.string() + ": drone rows are not contiguous or have unequal length");
        }
        refs.positions.push_back(std::move(row));
    }
    refs.pins.assign(pins.begin(), pins.end());
    refs.segments.emplace_back(0, refs.steps() - 1);
    return refs;
}

nlohmann::json referenceToJson(const ReferenceSet& refs) {
    nlohmann::json positions = nlohmann::json::array();
    for (const auto& row : refs.positions) {
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& p : row) samples.push_back({p.x(), p.y(), p.z()});
        positions.push_back(std::move(samples));
    }
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& [a, b] : refs.segments) segments.push_back({a, b});
    return {{"dt", refs.dt},           {"t0", refs.t0},         {"tT", refs.tT},
            {"steps", refs.steps()},   {"drones", refs.drones()}, {"pins", refs.pins},
            {"segments", segments},    {"max_snap", refs.max_snap}, {"positions", positions}};
}

}  // namespace swarmchor
