#include "swarmchor/config.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace swarmchor;

TEST(Config, DefaultsRoundTrip) {
    const Config c;
    const nlohmann::json j = configToJson(c);
    EXPECT_EQ(configToJson(configFromJson(j)), j);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, PartialOverride) {
    const Config c = configFromJson(nlohmann::json::parse(R"({"filter": {"horizon": 20, "gamma": 0}, "limits": {"v_max": 1.5}})"));
    EXPECT_EQ(c.filter.K, 20);
    EXPECT_EQ(c.filter.gamma, 0.0);
    EXPECT_EQ(c.limits.v_max, 1.5);
    EXPECT_EQ(c.filter.degree, FilterConfig{}.degree);
    EXPECT_EQ(c.compileOptions().dt, c.model.dt);
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_THROW(configFromJson(nlohmann::json::parse(R"({"filter": {"horizn": 20}})")), ConfigError);
    EXPECT_THROW(configFromJson(nlohmann::json::parse(R"({"filtr": {}})")), ConfigError);
    EXPECT_THROW(configFromJson(nlohmann::json::parse(R"({"filter": {"horizon": "long"}})")), ConfigError);
}

TEST(Config, InfinityAndValidation) {
    const Config c = configFromJson(nlohmann::json::parse(R"({"filter": {"neighbor_radius": "inf"}})"));
    EXPECT_TRUE(std::isinf(c.filter.neighbor_radius));
    EXPECT_THROW(configFromJson(nlohmann::json::parse(R"({"limits": {"f_lo": 12.0}})")).validate(), std::exception);
}

TEST(Config, LoadFromFile) {
    const auto p = std::filesystem::temp_directory_path() / "swarmchor_config.json";
    std::ofstream(p) << R"({"model": {"k_p": 8.0}, "llm": {"max_retries": 1}})";
    const Config c = loadConfig(p);
    EXPECT_EQ(c.model.k_p, 8.0);
    EXPECT_EQ(c.llm.max_retries, 1);
    EXPECT_THROW(loadConfig(p.string() + ".missing"), ConfigError);
}
