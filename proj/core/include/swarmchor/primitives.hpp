#pragma once

#include "swarmchor/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace swarmchor {

using ParameterMap = std::map<std::string, double>;

struct ParameterSpec {
    std::string name;
    std::string unit;
    double min = 0.0;
    double max = 0.0;
    double default_value = 0.0;
    std::string doc;
};

/// A_p sin(w_p tau) + B_p cos(w_p tau)
struct PeriodicTerm {
    Vec3 sin_amplitude = Vec3::Zero();
    Vec3 cos_amplitude = Vec3::Zero();
    double omega = 0.0;
};

/// M + sum_p (A_p sin w_p tau + B_p cos w_p tau) + sum_q C_q tau^q, with tau = t - t_i.
struct GeneratorTerms {
    Vec3 constant = Vec3::Zero();
    std::vector<PeriodicTerm> periodic;
    /// polynomial[q - 1] holds C_q.
    std::vector<Vec3> polynomial;

    Vec3 eval(double tau) const;
    /// Analytic d-th time derivative.
    Vec3 derivative(double tau, int order) const;
};

struct PrimitiveDefinition {
    std::string name;
    std::string description;
    std::vector<ParameterSpec> parameters;
    /// (resolved parameters, anchor, segment duration) -> generator terms for one drone.
    std::function<GeneratorTerms(const ParameterMap&, const Vec3&, double)> terms;

    const ParameterSpec* parameter(const std::string& name) const;
};

struct PrimitiveSpec {
    std::string name;
    ParameterMap parameters;
    double t_i = 0.0;
    double t_f = 0.0;
};

/// Per-drone layout anchor c_n.
struct Configuration {
    Vec3 anchor = Vec3::Zero();
};

class ParameterError : public std::invalid_argument {
public:
    ParameterError(std::string parameter, const std::string& what)
        : std::invalid_argument(what), parameter_(std::move(parameter)) {}
    const std::string& parameter() const { return parameter_; }

private:
    std::string parameter_;
};

class LayoutError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The built-in catalog. Immutable after construction.
class PrimitiveLibrary {
public:
    static const PrimitiveLibrary& builtin();

    const std::vector<PrimitiveDefinition>& all() const { return definitions_; }
    const PrimitiveDefinition* find(const std::string& name) const;

    /// [{name, description, parameters: [{name, unit, min, max, default, doc}]}]
    nlohmann::json catalogJson() const;

private:
    PrimitiveLibrary();
    std::vector<PrimitiveDefinition> definitions_;
};

const std::vector<PrimitiveDefinition>& listPrimitives();

/// Fills defaults; throws ParameterError on unknown names or out-of-range values.
ParameterMap resolveParameters(const PrimitiveDefinition& def, const ParameterMap& given);

GeneratorTerms primitiveTerms(const PrimitiveDefinition& def, const PrimitiveSpec& spec, const Configuration& c);

/// Position of one drone at absolute time t in [t_i, t_f].
Vec3 evalPrimitive(const PrimitiveDefinition& def, const PrimitiveSpec& spec, const Configuration& c, double t);

/// Anchors at angles 0, 2pi/n, ... around center.
std::vector<Configuration> layoutCircle(int n, double radius, const Vec3& center, const PhysicalLimits& limits = {});
/// rows x cols anchors starting at origin, x along columns, y along rows.
std::vector<Configuration> layoutGrid(int rows, int cols, double spacing, const Vec3& origin,
                                      const PhysicalLimits& limits = {});
/// Smallest pairwise anchor distance (infinity for fewer than two anchors).
double minimumSpacing(const std::vector<Configuration>& configs);

struct FeasibilityReport {
    double max_speed = 0.0;
    /// Extremes of the mass-normalized thrust demand ||p'' + g||.
    double max_thrust = 0.0;
    double min_thrust = 0.0;
    double max_arena_excursion = 0.0;  ///< metres outside the arena box, 0 when inside
    std::vector<std::string> failures;
    bool pass() const { return failures.empty(); }
};

struct FeasibilityOptions {
    int samples = 240;     ///< per segment, at least 200
    double margin = 0.10;  ///< fractional tightening of speed and thrust limits
};

/// Samples every drone's generator and finite-difference derivatives against the limits.
FeasibilityReport checkPrimitiveFeasibility(const PrimitiveDefinition& def, const PrimitiveSpec& spec,
                                            const std::vector<Configuration>& configs,
                                            const PhysicalLimits& limits, const FeasibilityOptions& options = {});

}  // namespace swarmchor
