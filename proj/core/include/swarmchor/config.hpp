#pragma once

#include "swarmchor/choreography.hpp"
#include "swarmchor/core.hpp"
#include "swarmchor/filter.hpp"
#include "swarmchor/llm.hpp"
#include "swarmchor/music.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <stdexcept>

namespace swarmchor {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelParams {
    double k_p = 10.0;
    double k_d = 5.0;
    double dt = 0.1;
};

struct LlmParams {
    int max_retries = 2;
    int timeout_ms = 60000;
    std::size_t prompt_char_cap = 8000;
};

struct SimParams {
    double disturbance = 0.0;  ///< m/s^2
    /// Half-width of the beat window used by the speed-extrema statistic.
    double beat_window = 0.2;
};

/// Everything a pipeline run can tune. Sections: limits, model, filter, music, choreography, llm, sim.
struct Config {
    PhysicalLimits limits;
    ModelParams model;
    FilterConfig filter;
    MusicParams music;
    ValidationOptions validation;
    LlmParams llm;
    SimParams sim;

    ClosedLoopModel closedLoop() const { return discretizeModel(model.k_p, model.k_d, model.dt); }
    CompileOptions compileOptions() const;
    void validate() const;
};

/// Missing keys keep their defaults; unknown sections or keys throw ConfigError.
Config configFromJson(const nlohmann::json& doc);
nlohmann::json configToJson(const Config& config);
Config loadConfig(const std::filesystem::path& path);

}  // namespace swarmchor
