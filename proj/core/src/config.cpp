#include "swarmchor/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace swarmchor {
namespace {

using nlohmann::json;

/// Reads the fields a section visits and rejects whatever is left over.
class Reader {
public:
    Reader(const json& section, std::string name) : section_(section), name_(std::move(name)) {
        if (!section_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }

    template <class T>
    void operator()(const char* key, T& field) {
        seen_.insert(key);
        const auto it = section_.find(key);
        if (it == section_.end()) return;
        try {
            read(*it, field);
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    void finish() const {
        for (const auto& [key, value] : section_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
        }
    }

private:
    template <class T>
    static void read(const json& j, T& out) { out = j.get<T>(); }
    static void read(const json& j, Vec3& out) {
        const auto v = j.get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("expected a 3-vector");
        out = Vec3(v[0], v[1], v[2]);
    }
    static void read(const json& j, double& out) {
        // JSON has no infinity; null or the string "inf" stand for it.
        if (j.is_null() || (j.is_string() && j.get<std::string>() == "inf")) {
            out = std::numeric_limits<double>::infinity();
            return;
        }
        out = j.get<double>();
    }

    const json& section_;
    std::string name_;
    std::set<std::string> seen_;
};

class Writer {
public:
    template <class T>
    void operator()(const char* key, const T& field) { out[key] = field; }
    void operator()(const char* key, const Vec3& v) { out[key] = {v.x(), v.y(), v.z()}; }
    void operator()(const char* key, const double& v) {
        out[key] = std::isinf(v) ? json("inf") : json(v);
    }
    json out = json::object();
};

template <class V>
void visit(PhysicalLimits& l, V& v) {
    v("p_lo", l.p_lo);
    v("p_hi", l.p_hi);
    v("v_max", l.v_max);
    v("f_lo", l.f_lo);
    v("f_hi", l.f_hi);
    v("gravity", l.gravity);
    v("ellipsoid_radii", l.ellipsoid_radii);
}

template <class V>
void visit(ModelParams& m, V& v) {
    v("k_p", m.k_p);
    v("k_d", m.k_d);
    v("dt", m.dt);
}

template <class V>
void visit(FilterConfig& f, V& v) {
    v("degree", f.degree);
    v("horizon", f.K);
    v("alpha", f.alpha);
    v("beta", f.beta);
    v("gamma", f.gamma);
    v("d_cost", f.d_cost);
    v("d_cont", f.d_cont);
    v("rho0", f.rho0);
    v("rho_growth", f.rho_growth);
    v("max_am_iters", f.max_am_iters);
    v("tol_residual", f.tol_residual);
    v("neighbor_radius", f.neighbor_radius);
    v("collision_margin", f.collision_margin);
    v("lateral_bias", f.lateral_bias);
    v("threads", f.threads);
}

template <class V>
void visit(MusicParams& m, V& v) {
    v("frame", m.novelty.frame);
    v("hop", m.novelty.hop);
    v("gamma", m.novelty.gamma);
    v("local_average_seconds", m.novelty.local_average_seconds);
    v("onset_floor", m.novelty.onset_floor);
    v("min_gap", m.min_gap);
    v("threshold", m.threshold);
    v("anchor_after", m.anchor_after);
}

template <class V>
void visit(ValidationOptions& o, V& v) {
    v("beat_tolerance", o.beat_tolerance);
    v("duplicate_distance", o.duplicate_distance);
    v("feasibility_samples", o.feasibility.samples);
    v("feasibility_margin", o.feasibility.margin);
}

template <class V>
void visit(LlmParams& p, V& v) {
    v("max_retries", p.max_retries);
    v("timeout_ms", p.timeout_ms);
    v("prompt_char_cap", p.prompt_char_cap);
}

template <class V>
void visit(SimParams& p, V& v) {
    v("disturbance", p.disturbance);
    v("beat_window", p.beat_window);
}

template <class F>
void forEachSection(Config& c, F&& f) {
    f("limits", c.limits);
    f("model", c.model);
    f("filter", c.filter);
    f("music", c.music);
    f("choreography", c.validation);
    f("llm", c.llm);
    f("sim", c.sim);
}

}  // namespace

CompileOptions Config::compileOptions() const {
    CompileOptions o;
    o.dt = model.dt;
    o.limits = limits;
    o.validation = validation;
    return o;
}

void Config::validate() const {
    try {
        limits.validate();
        filter.validate();
        (void)closedLoop();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (llm.max_retries < 0) throw ConfigError("llm.max_retries must be non-negative");
    if (llm.timeout_ms <= 0) throw ConfigError("llm.timeout_ms must be positive");
    if (sim.disturbance < 0.0) throw ConfigError("sim.disturbance must be non-negative");
}

Config configFromJson(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    Config c;
    std::set<std::string> known;
    forEachSection(c, [&](const char* name, auto& section) {
        known.insert(name);
        const auto it = doc.find(name);
        if (it == doc.end()) return;
        Reader r(*it, name);
        visit(section, r);
        r.finish();
    });
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) throw ConfigError("unknown config section '" + key + "'");
    }
    c.validate();
    return c;
}

json configToJson(const Config& config) {
    Config c = config;
    json doc = json::object();
    forEachSection(c, [&](const char* name, auto& section) {
        Writer w;
        visit(section, w);
        doc[name] = std::move(w.out);
    });
    return doc;
}

Config loadConfig(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return configFromJson(doc);
}

}  // namespace swarmchor
