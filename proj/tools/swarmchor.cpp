#include "swarmchor/config.hpp"
#include "swarmchor/simkit.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace swarmchor;

namespace {

enum Exit { kOk = 0, kInputError = 2, kChoreographerFailure = 3, kFilterFailure = 4 };

/// Input problems that end the run with exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    int threads = 0;

    std::string wav;
    std::string beats;
    std::string score;
    std::string refs;
    std::string raw;
    std::string certified;
    std::string instruction = "Create a performance that follows the music.";
    std::string backend;
    int drones = 0;
    std::string modality = "primitives";
    double disturbance = -1.0;
};

Config loadOptionalConfig(const Options& o) {
    Config c = o.config.empty() ? Config{} : loadConfig(o.config);
    if (o.threads > 0) c.filter.threads = o.threads;
    return c;
}

fs::path outputDir(const Options& o) {
    fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir.string());
    return dir;
}

void writeJson(const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

void requireFile(const std::string& path, const char* what) {
    if (path.empty()) throw InputError(fmt::format("missing --{}", what));
    if (!fs::is_regular_file(path)) throw InputError(fmt::format("{} file not found: {}", what, path));
}

ReferenceSet compileFromFiles(const Options& o, const Config& cfg) {
    requireFile(o.score, "score");
    requireFile(o.beats, "beats");
    const BeatTimeline beats = loadBeats(o.beats);
    ParsedScore parsed = parseScore(readTextFile(o.score));
    if (!parsed.ok()) {
        std::cerr << parsed.errors.toText();
        throw InputError("score has syntax errors");
    }
    CompileOptions copts = cfg.compileOptions();
    if (o.drones > 0) copts.validation.expected_drones = o.drones;
    try {
        return compileScore(parsed.score, beats, copts);
    } catch (const CompileError& e) {
        std::cerr << e.report().toText();
        throw InputError(e.what());
    }
}

int cmdAnalyze(const Options& o) {
    requireFile(o.wav, "wav");
    const Config cfg = loadOptionalConfig(o);
    AudioSignal signal;
    try {
        signal = loadWav(o.wav);
    } catch (const WavError& e) {
        throw InputError(e.what());
    }
    const AnalysisResult result = analyzeSong(signal, cfg.music);
    if (result.detected == 0) std::cerr << "warning: no beats detected; only the t=0 anchor is written\n";
    const fs::path out = outputDir(o) / "beats.json";
    saveBeats(out, result.timeline);
    std::cout << fmt::format("{} beats ({} detected) -> {}\n", result.timeline.beats.size(), result.detected,
                             out.string());
    return kOk;
}

int cmdChoreograph(const Options& o) {
    requireFile(o.beats, "beats");
    if (o.backend.empty()) throw InputError("missing --backend (mock:<fixture> or http)");
    if (o.drones < 1) throw InputError("--drones must be positive");
    const auto modality = modalityFromString(o.modality);
    if (!modality) throw InputError("unknown modality " + o.modality);
    const Config cfg = loadOptionalConfig(o);
    const BeatTimeline beats = loadBeats(o.beats);

    std::unique_ptr<GenerationBackend> backend;
    try {
        backend = makeBackend(o.backend);
    } catch (const BackendError& e) {
        throw InputError(e.what());
    }
    PromptOptions popts;
    popts.char_cap = cfg.llm.prompt_char_cap;
    const PromptBundle prompt =
        buildPrompt(beats, PrimitiveLibrary::builtin(), o.drones, o.instruction, *modality, popts);
    if (prompt.downsampled) std::cerr << fmt::format("warning: beat list downsampled to every {}th beat\n", prompt.beat_stride);

    CorrectionOptions copts;
    copts.max_retries = cfg.llm.max_retries;
    copts.timeout = std::chrono::milliseconds(cfg.llm.timeout_ms);
    copts.validation = cfg.validation;
    copts.validation.expected_drones = o.drones;
    const CorrectionTranscript tr = selfCorrect(*backend, prompt, beats, cfg.limits, copts);

    const fs::path dir = outputDir(o);
    writeJson(dir / "transcript.json", tr.toJson());
    if (!tr.success()) {
        std::cerr << "choreographer failed: " << tr.terminal_failure << '\n';
        return kChoreographerFailure;
    }
    std::ofstream(dir / "score.score") << tr.score->toText();
    std::cout << fmt::format("score after {} attempt(s) -> {}\n", tr.attempts.size(), (dir / "score.score").string());
    return kOk;
}

int cmdCompile(const Options& o) {
    const Config cfg = loadOptionalConfig(o);
    const ReferenceSet refs = compileFromFiles(o, cfg);
    const fs::path dir = outputDir(o);
    writeReferenceCsv(dir / "refs.csv", refs);
    writeJson(dir / "refs.json", referenceToJson(refs));
    std::cout << fmt::format("{} drones x {} steps, {} pins -> {}\n", refs.drones(), refs.steps(), refs.pins.size(),
                             (dir / "refs.csv").string());
    return kOk;
}

int cmdFilter(const Options& o) {
    const Config cfg = loadOptionalConfig(o);
    ReferenceSet refs;
    if (!o.refs.empty()) {
        requireFile(o.refs, "refs");
        refs = readReferenceCsv(o.refs);
    } else {
        refs = compileFromFiles(o, cfg);
    }
    const CertifiedPerformance perf = runFilter(refs, cfg.closedLoop(), cfg.limits, cfg.filter);
    const fs::path dir = outputDir(o);
    writeReferenceCsv(dir / "refs.csv", refs);
    writeCertifiedCsv(dir / "certified.csv", perf);
    const nlohmann::json diag = diagnosticsToJson(perf, refs, cfg.limits);
    writeJson(dir / "diagnostics.json", diag);
    writeJson(dir / "timings.json", timingsToJson(perf));
    const auto& s = diag.at("summary");
    std::cout << fmt::format("non-converged {}/{} drone-steps, violation steps {}, mean deviation {:.2f} cm\n",
                             perf.nonConverged(), perf.steps() * perf.drones(), s.at("ellipsoid_violation_steps").get<int>(),
                             s.at("mean_deviation_cm").get<double>());
    if (perf.failed()) {
        std::cerr << fmt::format("filter failure: {:.2f}% of drone-steps did not converge\n",
                                 100.0 * perf.nonConvergedFraction());
        return kFilterFailure;
    }
    return kOk;
}

int cmdSimulate(const Options& o) {
    requireFile(o.certified, "certified");
    const Config cfg = loadOptionalConfig(o);
    const CertifiedPerformance perf = readCertifiedCsv(o.certified);
    SimOptions sopts;
    sopts.seed = o.seed;
    sopts.disturbance = o.disturbance >= 0.0 ? o.disturbance : cfg.sim.disturbance;
    const SimTrace trace = simulate(perf, cfg.closedLoop(), {}, sopts);
    const fs::path out = outputDir(o) / "trace.csv";
    writeTraceCsv(out, trace);
    std::cout << fmt::format("{} drones x {} steps -> {}\n", trace.drones(), trace.steps(), out.string());
    return kOk;
}

int cmdReport(const Options& o) {
    requireFile(o.raw, "raw");
    requireFile(o.certified, "certified");
    const Config cfg = loadOptionalConfig(o);
    const ReferenceSet raw = readReferenceCsv(o.raw);
    const CertifiedPerformance perf = readCertifiedCsv(o.certified);
    if (raw.drones() != perf.drones() || raw.steps() != perf.steps()) throw InputError("raw and certified grids differ");
    const MetricsReport m = computeMetrics(raw, perf, cfg.limits);

    const fs::path dir = outputDir(o);
    writeJson(dir / "metrics.json", metricsToJson(m));
    writeMetricsCsv(dir / "metrics.csv", m, perf.t0, perf.dt);

    std::vector<double> t(static_cast<std::size_t>(perf.steps()));
    for (int k = 0; k < perf.steps(); ++k) t[static_cast<std::size_t>(k)] = perf.timeAt(k);
    std::vector<double> beats;
    if (!o.beats.empty()) beats = loadBeats(o.beats).times();

    if (!m.raw_distance.empty()) {
        ChartSpec c{"Minimum inter-agent distance", "time [s]", "ellipsoid-normalized distance", {}, {1.0}, beats};
        std::vector<double> a, b;
        for (const auto& d : m.raw_distance) a.push_back(d.ellipsoid);
        for (const auto& d : m.certified_distance) b.push_back(d.ellipsoid);
        c.series = {{"raw", t, a, "#999999"}, {"certified", t, b, ""}};
        writeSvg(dir / "distance.svg", c);
    }
    writeSvg(dir / "speed.svg", {"Average swarm speed", "time [s]", "speed [m/s]", {{"mean speed", t, m.speed.mean_speed, ""}},
                                 {}, beats});
    writeSvg(dir / "deviation.svg",
             {"Deviation from raw references", "time [s]", "max deviation [cm]", {{"max over drones", t, m.deviation.series_cm, ""}},
              {}, beats});
    std::cout << fmt::format("mean deviation {:.2f} cm, max {:.2f} cm, violation steps {} -> {}\n",
                             m.deviation.overall_mean_cm, m.deviation.overall_max_cm, m.violations,
                             (dir / "metrics.json").string());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Beat-synchronized drone swarm choreography with a receding-horizon safety filter"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--seed", o.seed, "Random seed");
    app.add_option("--threads", o.threads, "Worker threads for the filter (0 = all cores)");

    auto* analyze = app.add_subcommand("analyze", "Extract an annotated beat timeline from a WAV file");
    analyze->add_option("wav", o.wav, "Input song (PCM WAV)")->required();

    auto* chor = app.add_subcommand("choreograph", "Generate a validated score through a text-generation backend");
    chor->add_option("--beats", o.beats, "beats.json")->required();
    chor->add_option("--instruction", o.instruction, "Choreography request");
    chor->add_option("--backend", o.backend, "mock:<fixture.json> or http")->required();
    chor->add_option("--drones", o.drones, "Swarm size")->required();
    chor->add_option("--modality", o.modality, "primitives or waypoints");

    auto* comp = app.add_subcommand("compile", "Compile a score into gridded references");
    comp->add_option("--score", o.score)->required();
    comp->add_option("--beats", o.beats)->required();
    comp->add_option("--drones", o.drones, "Expected swarm size");

    auto* filt = app.add_subcommand("filter", "Certify references with the safety filter");
    filt->add_option("--score", o.score);
    filt->add_option("--beats", o.beats);
    filt->add_option("--refs", o.refs, "Compiled refs.csv instead of score + beats");
    filt->add_option("--drones", o.drones, "Expected swarm size");

    auto* sim = app.add_subcommand("simulate", "Run the closed-loop model on a certified performance");
    sim->add_option("--certified", o.certified)->required();
    sim->add_option("--disturbance", o.disturbance, "Random acceleration bound [m/s^2]");

    auto* rep = app.add_subcommand("report", "Metrics and SVG charts comparing raw and certified trajectories");
    rep->add_option("--raw", o.raw)->required();
    rep->add_option("--certified", o.certified)->required();
    rep->add_option("--beats", o.beats, "Beat markers for the charts");

    for (auto* sub : {analyze, chor, comp, filt, sim, rep}) {
        sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--threads", o.threads, "Worker threads for the filter");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (analyze->parsed()) return cmdAnalyze(o);
        if (chor->parsed()) return cmdChoreograph(o);
        if (comp->parsed()) return cmdCompile(o);
        if (filt->parsed()) return cmdFilter(o);
        if (sim->parsed()) return cmdSimulate(o);
        if (rep->parsed()) return cmdReport(o);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}
