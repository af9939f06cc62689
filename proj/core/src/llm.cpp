#include "swarmchor/llm.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace swarmchor {
namespace {

constexpr std::string_view kSystemText =
    "You are the choreographer of an indoor drone swarm performing to music.\n"
    "Plan a performance that follows the beats listed below. The plan is executed by a safety "
    "filter that keeps drones apart and within physical limits, so keep motions smooth and "
    "inside the arena.\n"
    "Answer with a score in the DSL below inside one ```score fenced block and nothing else.\n";

constexpr std::string_view kGrammar =
    "Score DSL (one statement per line, '#' starts a comment):\n"
    "  drones <N>\n"
    "  primitive <name> from <t_i> to <t_f> {<param>=<value>, ...} [layout=circle(<n>,<radius>[,<z>]) | "
    "layout=grid(<rows>,<cols>,<spacing>[,<z>])]\n"
    "  waypoint <t> drone <index> -> (<x>,<y>,<z>)\n"
    "Rules: t_i and t_f must be beat times; segments must not overlap; the first primitive needs a "
    "layout whose drone count equals N; a segment without a layout starts where the previous one "
    "ended. Waypoints: every drone (0..N-1) needs a target at every listed beat and no two drones "
    "may share a target. Use one modality per score.\n";

constexpr std::string_view kPrimitiveExample =
    "Example (primitives):\n"
    "```score\n"
    "drones 8\n"
    "primitive hover from 0 to 2 {} layout=circle(8,1.5)\n"
    "primitive rotate from 2 to 6 {angular_displacement=3.1416}\n"
    "primitive wave from 6 to 10 {amplitude=0.3}\n"
    "```\n";

constexpr std::string_view kWaypointExample =
    "Example (waypoints):\n"
    "```score\n"
    "drones 2\n"
    "waypoint 0 drone 0 -> (-1,0,1.5)\n"
    "waypoint 0 drone 1 -> (1,0,1.5)\n"
    "waypoint 2 drone 0 -> (0,-1,2)\n"
    "waypoint 2 drone 1 -> (0,1,2)\n"
    "```\n";

std::string beatLine(const Beat& b) {
    return fmt::format("t={:.3f} novelty={:.2f} dbfs={:.1f} chord={}\n", b.time, b.novelty, b.dbfs,
                       b.chord.value_or("none"));
}

std::string musicContext(const BeatTimeline& beats, int stride) {
    std::string out = fmt::format("Music: duration {:.2f} s, {} beats", beats.duration, beats.beats.size());
    out += stride > 1 ? fmt::format(", listing one beat in {}:\n", stride) : ":\n";
    for (std::size_t i = 0; i < beats.beats.size(); i += static_cast<std::size_t>(stride)) out += beatLine(beats.beats[i]);
    return out;
}

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// Collapses internal whitespace runs to one space.
std::string squeeze(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

bool looksLikeDsl(const std::string& line) {
    static constexpr std::string_view kHeads[] = {"drones ", "primitive ", "waypoint ", "#"};
    return std::any_of(std::begin(kHeads), std::end(kHeads),
                       [&](std::string_view h) { return line.rfind(h, 0) == 0; });
}

std::vector<std::string> splitLines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

std::string PromptBundle::userText() const {
    return fmt::format("{}\n{}\nSwarm size: {} drones.\nModality: {}.\n\nInstruction: {}\n", music_context, vocabulary,
                       swarm_size, toString(modality), instruction);
}

std::vector<ChatMessage> PromptBundle::messages() const { return {{"system", system}, {"user", userText()}}; }

PromptBundle buildPrompt(const BeatTimeline& beats, const PrimitiveLibrary& catalog, int swarm_size,
                         const std::string& instruction, Modality modality, const PromptOptions& options) {
    if (beats.beats.empty()) throw std::invalid_argument("buildPrompt: empty beat timeline");
    if (swarm_size < 1) throw std::invalid_argument("buildPrompt: swarm size must be positive");

    PromptBundle p;
    p.system = std::string(kSystemText) + std::string(kGrammar) + std::string(kPrimitiveExample) +
               std::string(kWaypointExample);
    p.swarm_size = swarm_size;
    p.instruction = instruction;
    p.modality = modality;
    if (modality == Modality::Primitives) {
        p.vocabulary = "Primitives (JSON catalog):\n" + catalog.catalogJson().dump() + "\n";
    } else {
        p.vocabulary = "Waypoints: give every drone a target (x,y,z) in metres at each chosen beat.\n";
    }

    p.music_context = musicContext(beats, 1);
    if (p.size() > options.char_cap) {
        // Shrink the beat list until the whole prompt fits; the header line is always kept.
        const std::size_t fixed = p.size() - p.music_context.size();
        const std::size_t budget = options.char_cap > fixed ? options.char_cap - fixed : 0;
        const std::size_t per_beat = std::max<std::size_t>(1, beatLine(beats.beats.front()).size());
        const std::size_t header = 96;
        const std::size_t fits = budget > header ? (budget - header) / per_beat : 0;
        int stride = static_cast<int>(std::max<std::size_t>(2, (beats.beats.size() + fits) / std::max<std::size_t>(fits, 1)));
        p.music_context = musicContext(beats, stride);
        while (p.size() > options.char_cap && stride < static_cast<int>(beats.beats.size())) {
            stride = std::max(stride + 1, stride * 5 / 4);
            p.music_context = musicContext(beats, stride);
        }
        p.beat_stride = stride;
        p.downsampled = true;
    }
    return p;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) {
    for (auto& r : responses) responses_.emplace_back(std::move(r));
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::fromFixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BackendError("cannot open backend fixture " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(path.string() + ": " + e.what());
    }
    const nlohmann::json& list = doc.is_object() ? doc.at("responses") : doc;
    if (!list.is_array() || list.empty()) throw BackendError(path.string() + ": expected a non-empty response list");
    auto backend = std::make_unique<ScriptedBackend>(std::vector<std::string>{});
    for (const auto& item : list) {
        if (item.is_string()) {
            backend->responses_.emplace_back(item.get<std::string>());
        } else if (item.is_object() && item.value("timeout", false)) {
            backend->responses_.emplace_back(std::nullopt);
        } else {
            throw BackendError(path.string() + ": responses must be strings or {\"timeout\": true}");
        }
    }
    return backend;
}

std::string ScriptedBackend::generate(const std::vector<ChatMessage>&, std::chrono::milliseconds timeout) {
    std::lock_guard lock(mutex_);
    if (responses_.empty()) throw BackendError("scripted backend has no responses");
    const auto& r = responses_[std::min(next_, responses_.size() - 1)];
    ++next_;
    if (!r) throw BackendTimeout(fmt::format("scripted backend timed out after {} ms", timeout.count()));
    return *r;
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return next_;
}

std::unique_ptr<GenerationBackend> makeBackend(const std::string& selector) {
    if (selector.rfind("mock:", 0) == 0) return ScriptedBackend::fromFixture(selector.substr(5));
    if (selector == "http") return HttpBackend::fromEnvironment();
    throw BackendError("unknown backend '" + selector + "' (expected mock:<fixture> or http)");
}

std::string sanitizeResponse(const std::string& text) {
    const std::vector<std::string> lines = splitLines(text);
    std::vector<std::string> block;

    // A fenced block wins if it holds any DSL.
    for (std::size_t i = 0; i < lines.size() && block.empty(); ++i) {
        if (trim(lines[i]).rfind("```", 0) != 0) continue;
        std::vector<std::string> inner;
        std::size_t j = i + 1;
        for (; j < lines.size() && trim(lines[j]).rfind("```", 0) != 0; ++j) inner.push_back(squeeze(lines[j]));
        if (std::any_of(inner.begin(), inner.end(), looksLikeDsl)) block = std::move(inner);
        i = j;
    }
    if (block.empty()) {
        bool started = false;
        for (const auto& raw : lines) {
            const std::string line = squeeze(raw);
            if (looksLikeDsl(line)) {
                started = true;
                block.push_back(line);
            } else if (started && !line.empty()) {
                break;
            }
        }
    }
    while (!block.empty() && block.back().empty()) block.pop_back();
    std::string out;
    for (const auto& l : block) {
        if (l.empty()) continue;
        out += l;
        out += '\n';
    }
    return out;
}

ParsedResponse parseResponse(const std::string& text) {
    ParsedResponse r;
    r.failure.sanitized = sanitizeResponse(text);
    const auto lines = splitLines(r.failure.sanitized);
    const bool has_statement =
        std::any_of(lines.begin(), lines.end(), [](const std::string& l) { return !l.empty() && l[0] != '#'; });
    if (!has_statement) {
        r.failure.errors.add({FailureCode::SyntaxError, 0, -1, std::nullopt, {}, "response contains no score statements"});
        return r;
    }
    ParsedScore parsed = parseScore(r.failure.sanitized);
    if (!parsed.ok()) {
        r.failure.errors = std::move(parsed.errors);
        return r;
    }
    r.score = std::move(parsed.score);
    return r;
}

std::string buildReprompt(const ValidationReport& report) {
    return "The score you returned cannot be deployed. Failure report:\n" + report.toText() +
           "Fix every listed problem and answer with the complete corrected score in one ```score block.\n";
}

nlohmann::json CorrectionTranscript::toJson() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : attempts) {
        list.push_back({{"prompt", a.prompt}, {"response", a.response}, {"report", a.report.toJson()}});
    }
    nlohmann::json doc = {{"attempts", std::move(list)}, {"success", success()}};
    doc["score"] = score ? nlohmann::json(score->toText()) : nlohmann::json(nullptr);
    if (!terminal_failure.empty()) doc["terminal_failure"] = terminal_failure;
    return doc;
}

CorrectionTranscript selfCorrect(GenerationBackend& backend, const PromptBundle& initial, const BeatTimeline& beats,
                                 const PhysicalLimits& limits, const CorrectionOptions& options) {
    if (options.max_retries < 0) throw std::invalid_argument("selfCorrect: max_retries must be non-negative");
    ValidationOptions vopts = options.validation;
    if (vopts.expected_drones == 0) vopts.expected_drones = initial.swarm_size;

    CorrectionTranscript tr;
    std::vector<ChatMessage> conversation = initial.messages();
    std::string prompt = initial.system + "\n" + initial.userText();
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        CorrectionAttempt a;
        a.prompt = prompt;
        try {
            a.response = backend.generate(conversation, options.timeout);
        } catch (const BackendError& e) {
            a.report.add({FailureCode::SyntaxError, 0, -1, std::nullopt, {}, std::string("backend failure: ") + e.what()});
            tr.attempts.push_back(std::move(a));
            tr.terminal_failure = e.what();
            return tr;
        }
        ParsedResponse parsed = parseResponse(a.response);
        a.report = parsed.ok() ? validateScore(*parsed.score, beats, limits, vopts) : parsed.failure.errors;
        const bool valid = a.report.empty();
        conversation.push_back({"assistant", a.response});
        prompt = buildReprompt(a.report);
        conversation.push_back({"user", prompt});
        tr.attempts.push_back(std::move(a));
        if (valid) {
            tr.score = std::move(parsed.score);
            return tr;
        }
    }
    tr.terminal_failure = fmt::format("no valid score after {} attempts", tr.attempts.size());
    return tr;
}

}  // namespace swarmchor
