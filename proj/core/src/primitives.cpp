#include "swarmchor/primitives.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace swarmchor {
namespace {

constexpr double kPi = std::numbers::pi;

double factorialRatio(int q, int order) {
    // q! / (q - order)!
    double r = 1.0;
    for (int i = 0; i < order; ++i) r *= static_cast<double>(q - i);
    return r;
}

Vec3 planar(const Vec3& v) { return {v.x(), v.y(), 0.0}; }

double azimuth(const Vec3& c) {
    return (std::abs(c.x()) < 1e-12 && std::abs(c.y()) < 1e-12) ? 0.0 : std::atan2(c.y(), c.x());
}

/// Smooth rest-to-rest displacement D over T: D (3 s^2 - 2 s^3), s = tau / T.
void addSmoothstep(GeneratorTerms& g, const Vec3& displacement, double duration) {
    g.polynomial.resize(std::max<std::size_t>(g.polynomial.size(), 3), Vec3::Zero());
    g.polynomial[1] += 3.0 * displacement / (duration * duration);
    g.polynomial[2] += -2.0 * displacement / (duration * duration * duration);
}

/// Rigid rotation of the anchor about the vertical axis through the origin at rate omega.
void addRotation(GeneratorTerms& g, const Vec3& c, double omega) {
    g.constant += Vec3(0.0, 0.0, c.z());
    g.periodic.push_back({Vec3(-c.y(), c.x(), 0.0), Vec3(c.x(), c.y(), 0.0), omega});
}

/// Vertical travelling wave with phase phi, shifted so the offset is zero at tau = 0:
/// a (sin(w tau - phi) + sin phi).
void addZeroPhaseWave(GeneratorTerms& g, double amplitude, double omega, double phase) {
    g.constant += Vec3(0.0, 0.0, amplitude * std::sin(phase));
    g.periodic.push_back({Vec3(0.0, 0.0, amplitude * std::cos(phase)), Vec3(0.0, 0.0, -amplitude * std::sin(phase)), omega});
}

double periodsToOmega(double periods, double duration) { return 2.0 * kPi * periods / duration; }

std::vector<PrimitiveDefinition> buildCatalog() {
    std::vector<PrimitiveDefinition> lib;

    const ParameterSpec angular{"angular_displacement", "rad", -24.0 * kPi, 24.0 * kPi, kPi,
                                "total rotation about the vertical axis over the segment (positive is counter-clockwise)"};
    const ParameterSpec periods{"periods", "cycles", 0.25, 8.0, 1.0, "number of oscillation cycles over the segment"};

    lib.push_back({"hover", "hold the layout anchor, optionally bobbing vertically",
                   {{"bob_amplitude", "m", 0.0, 0.3, 0.0, "vertical bob amplitude, 0 for a still hover"}, periods},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       g.periodic.push_back({Vec3(0.0, 0.0, p.at("bob_amplitude")), Vec3::Zero(),
                                             periodsToOmega(p.at("periods"), T)});
                       return g;
                   }});

    lib.push_back({"rotate", "rigid rotation of the whole formation about the vertical axis at fixed height",
                   {angular},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       addRotation(g, c, p.at("angular_displacement") / T);
                       return g;
                   }});

    lib.push_back({"helix", "rotation about the vertical axis combined with a steady climb or descent",
                   {angular, {"climb", "m", -2.0, 2.0, 0.5, "height change over the segment"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       addRotation(g, c, p.at("angular_displacement") / T);
                       g.polynomial.push_back(Vec3(0.0, 0.0, p.at("climb") / T));
                       return g;
                   }});

    lib.push_back({"spiral", "rotation about the vertical axis while the circle radius grows or shrinks",
                   {angular, {"radius_growth", "m", -1.5, 2.0, 0.5, "radius change reached at the end of the segment"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       const double dtheta = p.at("angular_displacement");
                       addRotation(g, c, dtheta / T);
                       // Linear drift along the final radial direction: the radius at t_f is r0 + growth.
                       const double final_angle = azimuth(c) + dtheta;
                       g.polynomial.push_back(p.at("radius_growth") / T *
                                              Vec3(std::cos(final_angle), std::sin(final_angle), 0.0));
                       return g;
                   }});

    lib.push_back({"wave", "surface wave travelling along x across a grid formation",
                   {{"amplitude", "m", 0.0, 1.0, 0.2, "vertical wave amplitude"},
                    periods,
                    {"wavelength", "m", 0.5, 20.0, 4.0, "spatial wavelength along x"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       addZeroPhaseWave(g, p.at("amplitude"), periodsToOmega(p.at("periods"), T),
                                        2.0 * kPi * c.x() / p.at("wavelength"));
                       return g;
                   }});

    lib.push_back({"ascend_descend", "smooth rest-to-rest height change of the whole formation",
                   {{"height_change", "m", -2.5, 2.5, 0.5, "vertical displacement, negative descends"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       addSmoothstep(g, Vec3(0.0, 0.0, p.at("height_change")), T);
                       return g;
                   }});

    lib.push_back({"expand_contract", "scale the formation radially about the vertical axis",
                   {{"scale", "ratio", 0.2, 3.0, 1.5, "final horizontal size relative to the start"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       addSmoothstep(g, (p.at("scale") - 1.0) * planar(c), T);
                       return g;
                   }});

    lib.push_back({"figure_eight", "each drone traces a horizontal figure eight around its anchor",
                   {{"size", "m", 0.05, 1.5, 0.3, "half-width of the eight along x"},
                    {"loops", "cycles", 0.25, 8.0, 1.0, "number of complete eights over the segment"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       const double w = periodsToOmega(p.at("loops"), T);
                       const double s = p.at("size");
                       g.periodic.push_back({Vec3(s, 0.0, 0.0), Vec3::Zero(), w});
                       g.periodic.push_back({Vec3(0.0, 0.5 * s, 0.0), Vec3::Zero(), 2.0 * w});
                       return g;
                   }});

    lib.push_back({"line_sweep", "translate the formation along a horizontal heading, rest to rest",
                   {{"distance", "m", -6.0, 6.0, 1.0, "travel distance"},
                    {"heading", "rad", -kPi, kPi, 0.0, "direction of travel, 0 is +x"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       const double h = p.at("heading");
                       addSmoothstep(g, p.at("distance") * Vec3(std::cos(h), std::sin(h), 0.0), T);
                       return g;
                   }});

    lib.push_back({"cascade", "vertical ripple running around the formation, phase set by each drone's bearing",
                   {{"amplitude", "m", 0.0, 1.0, 0.3, "vertical ripple amplitude"},
                    periods,
                    {"lobes", "count", 1.0, 6.0, 1.0, "ripple crests around the circle"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       addZeroPhaseWave(g, p.at("amplitude"), periodsToOmega(p.at("periods"), T),
                                        std::round(p.at("lobes")) * azimuth(c));
                       return g;
                   }});

    lib.push_back({"pulse", "rhythmic radial breathing of the formation",
                   {{"ratio", "ratio", 0.0, 0.6, 0.2, "radial swing relative to each drone's distance from the axis"},
                    {"periods", "cycles", 0.25, 8.0, 2.0, "number of breaths over the segment"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       g.periodic.push_back({p.at("ratio") * planar(c), Vec3::Zero(), periodsToOmega(p.at("periods"), T)});
                       return g;
                   }});

    lib.push_back({"swap_halves", "drones mirror across the x = 0 plane, the +x half passing above the -x half",
                   {{"lift", "m", 0.0, 1.5, 0.8, "peak vertical offset while crossing"}},
                   [](const ParameterMap& p, const Vec3& c, double T) {
                       GeneratorTerms g;
                       g.constant = c;
                       addSmoothstep(g, Vec3(-2.0 * c.x(), 0.0, 0.0), T);
                       // drones on the plane stay put; the crossing halves pass above and below them
                       if (std::abs(c.x()) < 1e-9) return g;
                       const double side = c.x() > 0.0 ? 1.0 : -1.0;
                       g.periodic.push_back({Vec3(0.0, 0.0, side * p.at("lift")), Vec3::Zero(), kPi / T});
                       return g;
                   }});

    return lib;
}

}  // namespace

Vec3 GeneratorTerms::eval(double tau) const { return derivative(tau, 0); }

Vec3 GeneratorTerms::derivative(double tau, int order) const {
    Vec3 out = order == 0 ? constant : Vec3::Zero();
    for (const auto& term : periodic) {
        // d^k/dt^k of sin and cos cycles with period 4.
        const double scale = std::pow(term.omega, order);
        const double s = std::sin(term.omega * tau);
        const double c = std::cos(term.omega * tau);
        double ds = 0.0, dc = 0.0;
        switch (order % 4) {
            case 0: ds = s; dc = c; break;
            case 1: ds = c; dc = -s; break;
            case 2: ds = -s; dc = -c; break;
            default: ds = -c; dc = s; break;
        }
        out += scale * (term.sin_amplitude * ds + term.cos_amplitude * dc);
    }
    for (std::size_t i = 0; i < polynomial.size(); ++i) {
        const int q = static_cast<int>(i) + 1;
        if (q < order) continue;
        out += polynomial[i] * factorialRatio(q, order) * std::pow(tau, q - order);
    }
    return out;
}

const ParameterSpec* PrimitiveDefinition::parameter(const std::string& key) const {
    for (const auto& p : parameters) {
        if (p.name == key) return &p;
    }
    return nullptr;
}

PrimitiveLibrary::PrimitiveLibrary() : definitions_(buildCatalog()) {}

const PrimitiveLibrary& PrimitiveLibrary::builtin() {
    static const PrimitiveLibrary library;
    return library;
}

const PrimitiveDefinition* PrimitiveLibrary::find(const std::string& name) const {
    for (const auto& d : definitions_) {
        if (d.name == name) return &d;
    }
    return nullptr;
}

nlohmann::json PrimitiveLibrary::catalogJson() const {
    auto doc = nlohmann::json::array();
    for (const auto& d : definitions_) {
        auto params = nlohmann::json::array();
        for (const auto& p : d.parameters) {
            params.push_back({{"name", p.name}, {"unit", p.unit}, {"min", p.min}, {"max", p.max},
                              {"default", p.default_value}, {"doc", p.doc}});
        }
        doc.push_back({{"name", d.name}, {"description", d.description}, {"parameters", params}});
    }
    return doc;
}

const std::vector<PrimitiveDefinition>& listPrimitives() { return PrimitiveLibrary::builtin().all(); }

ParameterMap resolveParameters(const PrimitiveDefinition& def, const ParameterMap& given) {
    ParameterMap out;
    for (const auto& p : def.parameters) out[p.name] = p.default_value;
    for (const auto& [key, value] : given) {
        const ParameterSpec* spec = def.parameter(key);
        if (spec == nullptr) throw ParameterError(key, def.name + ": unknown parameter '" + key + "'");
        if (!std::isfinite(value) || value < spec->min || value > spec->max) {
            throw ParameterError(key, def.name + ": parameter '" + key + "'=" + std::to_string(value) +
                                          " outside [" + std::to_string(spec->min) + ", " +
                                          std::to_string(spec->max) + "] " + spec->unit);
        }
        out[key] = value;
    }
    return out;
}

GeneratorTerms primitiveTerms(const PrimitiveDefinition& def, const PrimitiveSpec& spec, const Configuration& c) {
    const double duration = spec.t_f - spec.t_i;
    if (!(duration > 0.0)) throw std::invalid_argument(def.name + ": t_f must be after t_i");
    return def.terms(resolveParameters(def, spec.parameters), c.anchor, duration);
}

Vec3 evalPrimitive(const PrimitiveDefinition& def, const PrimitiveSpec& spec, const Configuration& c, double t) {
    constexpr double kTimeTol = 1e-9;
    if (t < spec.t_i - kTimeTol || t > spec.t_f + kTimeTol) {
        throw std::out_of_range(def.name + ": t=" + std::to_string(t) + " outside [" + std::to_string(spec.t_i) +
                                ", " + std::to_string(spec.t_f) + "]");
    }
    return primitiveTerms(def, spec, c).eval(std::clamp(t, spec.t_i, spec.t_f) - spec.t_i);
}

double minimumSpacing(const std::vector<Configuration>& configs) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < configs.size(); ++i) {
        for (std::size_t j = i + 1; j < configs.size(); ++j) {
            best = std::min(best, (configs[i].anchor - configs[j].anchor).norm());
        }
    }
    return best;
}

namespace {

void checkLayoutSpacing(double spacing, const PhysicalLimits& limits, const char* what) {
    const double required = 2.0 * std::max(limits.ellipsoid_radii.x(), limits.ellipsoid_radii.y());
    if (spacing < required) {
        throw LayoutError(std::string(what) + ": anchor spacing " + std::to_string(spacing) +
                          " m is below the envelope width " + std::to_string(required) + " m");
    }
}

}  // namespace

std::vector<Configuration> layoutCircle(int n, double radius, const Vec3& center, const PhysicalLimits& limits) {
    if (n < 1) throw LayoutError("layoutCircle: need at least one drone");
    if (!(radius > 0.0)) throw LayoutError("layoutCircle: radius must be positive");
    if (n > 1) {
        const double spacing = n == 2 ? 2.0 * radius : 2.0 * radius * std::sin(kPi / n);
        checkLayoutSpacing(spacing, limits, "layoutCircle");
    }
    std::vector<Configuration> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double a = 2.0 * kPi * k / n;
        out.push_back({center + radius * Vec3(std::cos(a), std::sin(a), 0.0)});
    }
    return out;
}

std::vector<Configuration> layoutGrid(int rows, int cols, double spacing, const Vec3& origin,
                                      const PhysicalLimits& limits) {
    if (rows < 1 || cols < 1) throw LayoutError("layoutGrid: rows and cols must be positive");
    if (!(spacing > 0.0)) throw LayoutError("layoutGrid: spacing must be positive");
    if (rows * cols > 1) checkLayoutSpacing(spacing, limits, "layoutGrid");
    std::vector<Configuration> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) out.push_back({origin + Vec3(c * spacing, r * spacing, 0.0)});
    }
    return out;
}

FeasibilityReport checkPrimitiveFeasibility(const PrimitiveDefinition& def, const PrimitiveSpec& spec,
                                            const std::vector<Configuration>& configs,
                                            const PhysicalLimits& limits, const FeasibilityOptions& options) {
    FeasibilityReport report;
    report.min_thrust = std::numeric_limits<double>::infinity();
    const int samples = std::max(options.samples, 200);
    const double duration = spec.t_f - spec.t_i;
    const double h = duration / samples;
    const double fd = 1e-4 * duration;

    for (const auto& c : configs) {
        const GeneratorTerms g = primitiveTerms(def, spec, c);
        for (int s = 0; s <= samples; ++s) {
            const double tau = s * h;
            const Vec3 p = g.eval(tau);
            // Central differences on a step much finer than the sampling grid; the generator is
            // defined for all tau, so the stencil may reach past the segment ends.
            const Vec3 prev = g.eval(tau - fd);
            const Vec3 next = g.eval(tau + fd);
            const Vec3 vel = (next - prev) / (2.0 * fd);
            const Vec3 acc = (next - 2.0 * p + prev) / (fd * fd);
            const double thrust = (acc + limits.gravity).norm();
            report.max_speed = std::max(report.max_speed, vel.norm());
            report.max_thrust = std::max(report.max_thrust, thrust);
            report.min_thrust = std::min(report.min_thrust, thrust);
            const Vec3 below = (limits.p_lo - p).cwiseMax(0.0);
            const Vec3 above = (p - limits.p_hi).cwiseMax(0.0);
            report.max_arena_excursion = std::max(report.max_arena_excursion, below.cwiseMax(above).maxCoeff());
        }
    }
    if (configs.empty()) report.min_thrust = 0.0;

    const double keep = 1.0 - options.margin;
    auto fmt = [](double v) { return std::to_string(v); };
    if (report.max_speed > keep * limits.v_max) {
        report.failures.push_back(def.name + ": peak speed " + fmt(report.max_speed) + " m/s exceeds " +
                                  fmt(keep * limits.v_max) + " m/s");
    }
    if (report.max_thrust > keep * limits.f_hi) {
        report.failures.push_back(def.name + ": peak thrust demand " + fmt(report.max_thrust) + " m/s^2 exceeds " +
                                  fmt(keep * limits.f_hi) + " m/s^2");
    }
    if (!configs.empty() && report.min_thrust < limits.f_lo / keep) {
        report.failures.push_back(def.name + ": thrust demand drops to " + fmt(report.min_thrust) +
                                  " m/s^2, below " + fmt(limits.f_lo / keep) + " m/s^2");
    }
    if (report.max_arena_excursion > 0.0) {
        report.failures.push_back(def.name + ": leaves the arena by " + fmt(report.max_arena_excursion) + " m");
    }
    return report;
}

}  // namespace swarmchor
