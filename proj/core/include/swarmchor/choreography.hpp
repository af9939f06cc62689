#pragma once

#include "swarmchor/core.hpp"
#include "swarmchor/music.hpp"
#include "swarmchor/primitives.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swarmchor {

enum class Modality { Waypoints, Primitives };

std::string_view toString(Modality m);
std::optional<Modality> modalityFromString(std::string_view s);

/// `circle(n, radius[, z])` or `grid(rows, cols, spacing[, z])`, both centred on the vertical axis.
struct LayoutDirective {
    enum class Kind { Circle, Grid };
    Kind kind = Kind::Circle;
    std::vector<double> args;

    int droneCount() const;
    std::string toString() const;
    /// Throws LayoutError for malformed arguments or envelope-violating spacing.
    std::vector<Configuration> anchors(const PhysicalLimits& limits) const;
};

struct ScoreSegment {
    PrimitiveSpec primitive;
    /// Absent: start from the previous segment's end poses.
    std::optional<LayoutDirective> layout;
    int line = 0;
};

struct WaypointTarget {
    double t = 0.0;
    int drone = 0;
    Vec3 target = Vec3::Zero();
    int line = 0;
};

struct Score {
    Modality modality = Modality::Primitives;
    /// From a `drones N` line; 0 means inferred from layouts or waypoint indices.
    int declared_drones = 0;
    std::vector<ScoreSegment> segments;
    std::vector<WaypointTarget> waypoints;

    int swarmSize() const;
    /// Earliest and latest referenced times.
    double startTime() const;
    double endTime() const;
    /// Canonical DSL text; parseScore(toText()) reproduces the score.
    std::string toText() const;
};

enum class FailureCode {
    UnknownPrimitive,
    BadParameter,
    BeatNotInTimeline,
    CoverageGap,
    MissingWaypoint,
    DuplicateTarget,
    LimitViolation,
    SyntaxError,
};

std::string_view toString(FailureCode code);

struct ValidationFailure {
    FailureCode code = FailureCode::SyntaxError;
    int line = 0;                ///< 1-based source line, 0 when not tied to a line
    int segment = -1;            ///< primitive segment index, -1 when not applicable
    std::optional<double> beat;  ///< offending time, when applicable
    std::vector<int> drones;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationFailure> failures;

    bool empty() const { return failures.empty(); }
    bool has(FailureCode code) const;
    void add(ValidationFailure f) { failures.push_back(std::move(f)); }
    /// One line per failure: "<Code> [line N] [segment S] [t=..] [drones ..]: message".
    std::string toText() const;
    nlohmann::json toJson() const;
};

struct ParsedScore {
    Score score;
    ValidationReport errors;  ///< only SyntaxError entries
    bool ok() const { return errors.empty(); }
};

/// Total: malformed lines are reported as SyntaxError with their line number, never thrown.
ParsedScore parseScore(std::string_view text);

struct ValidationOptions {
    double beat_tolerance = 2e-3;  ///< seconds
    double duplicate_distance = 1e-6;
    /// When positive, the swarm size the score must cover.
    int expected_drones = 0;
    FeasibilityOptions feasibility;
};

ValidationReport validateScore(const Score& score, const BeatTimeline& beats, const PhysicalLimits& limits,
                               const ValidationOptions& options = {});

/// Position references on a uniform grid t_k = t0 + k dt, with pinned (hard) sample indices.
struct ReferenceSet {
    double dt = 0.1;
    double t0 = 0.0;
    double tT = 0.0;
    /// positions[drone][k]
    std::vector<std::vector<Vec3>> positions;
    /// Sorted, unique grid indices where the filter enforces equality.
    std::vector<int> pins;
    /// Grid index ranges [first, last] covered by each primitive segment (waypoints: one range).
    std::vector<std::pair<int, int>> segments;
    /// Largest |beat time - snapped grid time| over all pins.
    double max_snap = 0.0;

    int steps() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
    int drones() const { return static_cast<int>(positions.size()); }
    double timeAt(int k) const { return t0 + k * dt; }
    bool isPinned(int k) const;
    const Vec3& at(int drone, int k) const { return positions[static_cast<std::size_t>(drone)][static_cast<std::size_t>(k)]; }
};

class CompileError : public std::runtime_error {
public:
    CompileError(const std::string& what, ValidationReport report)
        : std::runtime_error(what), report_(std::move(report)) {}
    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

struct CompileOptions {
    double dt = 0.1;
    PhysicalLimits limits;
    ValidationOptions validation;
};

/// Validates, then samples the score on the grid. Throws CompileError when validation fails.
ReferenceSet compileScore(const Score& score, const BeatTimeline& beats, const CompileOptions& options = {});

/// Columnar CSV: t,drone,x,y,z,pinned
void writeReferenceCsv(const std::filesystem::path& path, const ReferenceSet& refs);
ReferenceSet readReferenceCsv(const std::filesystem::path& path);
nlohmann::json referenceToJson(const ReferenceSet& refs);

std::string readTextFile(const std::filesystem::path& path);

}  // namespace swarmchor
