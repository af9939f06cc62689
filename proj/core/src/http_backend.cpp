#include "swarmchor/llm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

namespace swarmchor {
namespace {

std::string envOr(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : std::move(fallback);
}

}  // namespace

HttpBackend::HttpBackend(std::string url, std::string api_key, std::string model)
    : key_(std::move(api_key)), model_(std::move(model)) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw BackendError("backend URL needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    base_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/v1/chat/completions" : url.substr(slash);
}

std::unique_ptr<HttpBackend> HttpBackend::fromEnvironment() {
    const std::string url = envOr("SWARMCHOR_LLM_URL", "");
    if (url.empty()) throw BackendError("SWARMCHOR_LLM_URL is not set");
    return std::make_unique<HttpBackend>(url, envOr("SWARMCHOR_LLM_KEY", ""), envOr("SWARMCHOR_LLM_MODEL", "gpt-4"));
}

std::string HttpBackend::generate(const std::vector<ChatMessage>& conversation, std::chrono::milliseconds timeout) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : conversation) messages.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body = {{"model", model_}, {"messages", messages}, {"temperature", 0}};

    // A client per call keeps concurrent loops independent.
    httplib::Client client(base_);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Connection ||
            res.error() == httplib::Error::Write) {
            throw BackendTimeout("backend request failed: " + httplib::to_string(res.error()));
        }
        throw BackendError("backend request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) throw BackendError("backend returned HTTP " + std::to_string(res->status));
    try {
        const auto doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed backend response: ") + e.what());
    }
}

}  // namespace swarmchor
