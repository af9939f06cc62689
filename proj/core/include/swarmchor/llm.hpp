#pragma once

#include "swarmchor/choreography.hpp"

#include <nlohmann/json_fwd.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace swarmchor {

struct ChatMessage {
    std::string role;  ///< "system", "user" or "assistant"
    std::string content;
};

struct PromptOptions {
    /// Upper bound on the total prompt size in characters.
    std::size_t char_cap = 8000;
};

struct PromptBundle {
    std::string system;
    std::string music_context;
    std::string vocabulary;
    int swarm_size = 0;
    std::string instruction;
    Modality modality = Modality::Primitives;
    /// Every `beat_stride`-th beat is listed; > 1 means the context was downsampled.
    int beat_stride = 1;
    bool downsampled = false;

    /// Everything except the system text, in the order sent to the model.
    std::string userText() const;
    std::size_t size() const { return system.size() + userText().size(); }
    std::vector<ChatMessage> messages() const;
};

/// Deterministic prompt assembly. Oversized beat lists are thinned to every k-th beat.
PromptBundle buildPrompt(const BeatTimeline& beats, const PrimitiveLibrary& catalog, int swarm_size,
                         const std::string& instruction, Modality modality, const PromptOptions& options = {});

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendTimeout : public BackendError {
public:
    using BackendError::BackendError;
};

/// Text generation: the full conversation in, one completion out. Implementations must be
/// callable from several correction loops at once.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const std::vector<ChatMessage>& conversation, std::chrono::milliseconds timeout) = 0;
};

/// Replays canned responses in order; once exhausted, the last one repeats.
class ScriptedBackend : public GenerationBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses);
    /// JSON fixture: {"responses": ["...", ...]} or a plain array of strings. An entry
    /// {"timeout": true} makes that call time out.
    static std::unique_ptr<ScriptedBackend> fromFixture(const std::filesystem::path& path);

    std::string generate(const std::vector<ChatMessage>& conversation, std::chrono::milliseconds timeout) override;
    std::size_t calls() const;

private:
    std::vector<std::optional<std::string>> responses_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
};

/// Chat-completion client for an OpenAI-style endpoint.
class HttpBackend : public GenerationBackend {
public:
    HttpBackend(std::string url, std::string api_key, std::string model);
    /// SWARMCHOR_LLM_URL, SWARMCHOR_LLM_KEY, SWARMCHOR_LLM_MODEL. Throws BackendError when the URL is unset.
    static std::unique_ptr<HttpBackend> fromEnvironment();

    std::string generate(const std::vector<ChatMessage>& conversation, std::chrono::milliseconds timeout) override;

private:
    std::string base_;
    std::string path_;
    std::string key_;
    std::string model_;
};

/// "mock:<fixture.json>" or "http".
std::unique_ptr<GenerationBackend> makeBackend(const std::string& selector);

struct ParseFailure {
    std::string sanitized;
    ValidationReport errors;
};

struct ParsedResponse {
    std::optional<Score> score;
    ParseFailure failure;
    bool ok() const { return score.has_value(); }
};

/// Strips fences, prose and stray whitespace, leaving the first DSL block. Empty when none is found.
std::string sanitizeResponse(const std::string& text);
ParsedResponse parseResponse(const std::string& text);

/// The follow-up user message listing every failure of the previous attempt.
std::string buildReprompt(const ValidationReport& report);

struct CorrectionOptions {
    int max_retries = 2;
    std::chrono::milliseconds timeout{60000};
    ValidationOptions validation;
};

struct CorrectionAttempt {
    std::string prompt;
    std::string response;
    ValidationReport report;
};

struct CorrectionTranscript {
    std::vector<CorrectionAttempt> attempts;
    std::optional<Score> score;
    /// Set when the loop ended without a valid score.
    std::string terminal_failure;

    bool success() const { return score.has_value(); }
    nlohmann::json toJson() const;
};

/// generate -> parse -> validate, reprompting with the failure report until a score validates
/// or 1 + max_retries attempts are spent.
CorrectionTranscript selfCorrect(GenerationBackend& backend, const PromptBundle& initial, const BeatTimeline& beats,
                                 const PhysicalLimits& limits, const CorrectionOptions& options = {});

}  // namespace swarmchor
