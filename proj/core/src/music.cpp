#include "swarmchor/music.hpp"

#include <unsupported/Eigen/FFT>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>

namespace swarmchor {
namespace {

bool isPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

constexpr std::array<const char*, 12> kPitchNames = {"C", "C#", "D", "D#", "E", "F",
                                                     "F#", "G", "G#", "A", "A#", "B"};
// Pitch range folded into chroma: C2 .. C7.
constexpr double kChromaLowHz = 65.0;
constexpr double kChromaHighHz = 2100.0;

}  // namespace

std::size_t NoveltyCurve::indexOf(double t) const {
    if (values.empty()) return 0;
    const double idx = std::round((t - time_offset) * frame_rate);
    if (idx <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(idx), values.size() - 1);
}

NoveltyCurve spectralNovelty(const AudioSignal& signal, const NoveltyParams& params) {
    if (!isPowerOfTwo(params.frame) || params.frame < 256) {
        throw std::invalid_argument("spectralNovelty: frame must be a power of two >= 256");
    }
    if (params.hop <= 0 || params.hop > params.frame) {
        throw std::invalid_argument("spectralNovelty: hop must be in (0, frame]");
    }
    if (!(signal.sample_rate > 0.0)) throw std::invalid_argument("spectralNovelty: sample rate must be positive");
    const auto frame = static_cast<std::size_t>(params.frame);
    const auto hop = static_cast<std::size_t>(params.hop);
    if (signal.samples.size() < frame) {
        throw std::invalid_argument("spectralNovelty: signal shorter than one frame");
    }

    const std::size_t frames = (signal.samples.size() - frame) / hop + 1;
    const std::size_t bins = frame / 2 + 1;

    std::vector<double> window(frame);
    for (std::size_t i = 0; i < frame; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame));
    }

    // Pitch class of each bin, -1 outside the chroma range.
    std::vector<int> pitch_class(bins, -1);
    for (std::size_t k = 1; k < bins; ++k) {
        const double hz = static_cast<double>(k) * signal.sample_rate / static_cast<double>(frame);
        if (hz < kChromaLowHz || hz > kChromaHighHz) continue;
        const int midi = static_cast<int>(std::lround(69.0 + 12.0 * std::log2(hz / 440.0)));
        pitch_class[k] = ((midi % 12) + 12) % 12;
    }

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buffer(frame);
    std::vector<std::complex<double>> spectrum;
    std::vector<double> prev(bins, 0.0), cur(bins, 0.0);

    NoveltyCurve curve;
    curve.frame_rate = signal.sample_rate / static_cast<double>(hop);
    // Flux between frames n-1 and n is stamped at the centre of frame n plus one hop of latency
    // compensation: log compression makes the flux peak while an onset is still entering the window.
    curve.time_offset = (static_cast<double>(frame) / 2.0 + static_cast<double>(hop)) / signal.sample_rate;
    curve.values.assign(frames, 0.0);
    curve.chroma.assign(frames, std::array<double, 12>{});

    std::vector<double> raw(frames, 0.0);
    for (std::size_t n = 0; n < frames; ++n) {
        const std::size_t start = n * hop;
        for (std::size_t i = 0; i < frame; ++i) buffer[i] = signal.samples[start + i] * window[i];
        fft.fwd(spectrum, buffer);
        auto& chroma = curve.chroma[n];
        for (std::size_t k = 0; k < bins; ++k) {
            const double mag = std::abs(spectrum[k]);
            cur[k] = std::log1p(params.gamma * mag);
            if (pitch_class[k] >= 0) chroma[static_cast<std::size_t>(pitch_class[k])] += mag * mag;
        }
        if (n > 0) {
            double flux = 0.0;
            for (std::size_t k = 0; k < bins; ++k) flux += std::max(0.0, cur[k] - prev[k]);
            raw[n] = flux / static_cast<double>(bins);
        }
        std::swap(prev, cur);
    }

    const auto half = static_cast<std::ptrdiff_t>(std::lround(params.local_average_seconds * curve.frame_rate / 2.0));
    std::vector<double> prefix(frames + 1, 0.0);
    std::partial_sum(raw.begin(), raw.end(), prefix.begin() + 1);
    double peak = 0.0;
    for (std::size_t n = 0; n < frames; ++n) {
        const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(n) - half));
        const auto hi = std::min(frames, n + static_cast<std::size_t>(half) + 1);
        const double mean = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
        curve.values[n] = std::max(0.0, raw[n] - mean);
        peak = std::max(peak, curve.values[n]);
    }
    const double scale = std::max(peak, params.onset_floor);
    for (double& v : curve.values) v /= scale;
    return curve;
}

std::vector<double> detectBeats(const NoveltyCurve& novelty, double min_gap, double threshold) {
    if (!(min_gap > 0.0)) throw std::invalid_argument("detectBeats: min_gap must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("detectBeats: threshold must be in (0, 1)");
    const auto& v = novelty.values;
    if (v.size() < 3) return {};
    const double peak = *std::max_element(v.begin(), v.end());
    if (!(peak > 0.0)) return {};
    const double level = threshold * peak;

    // Plateaus count once, at their first sample.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (v[i] >= level && v[i] > v[i - 1] && v[i] >= v[i + 1]) candidates.push_back(i);
    }

    // Greedy thinning: strongest first, reject anything closer than min_gap to a kept peak.
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[candidates[a]] > v[candidates[b]]; });
    std::vector<std::size_t> kept;
    for (std::size_t o : order) {
        const double t = novelty.timeOf(candidates[o]);
        const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return std::abs(novelty.timeOf(k) - t) < min_gap - 1e-12;
        });
        if (!clash) kept.push_back(candidates[o]);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<double> times;
    times.reserve(kept.size());
    for (std::size_t k : kept) times.push_back(novelty.timeOf(k));
    return times;
}

std::vector<double> BeatTimeline::times() const {
    std::vector<double> out;
    out.reserve(beats.size());
    for (const auto& b : beats) out.push_back(b.time);
    return out;
}

std::optional<std::size_t> BeatTimeline::find(double t, double tol) const {
    auto it = std::lower_bound(beats.begin(), beats.end(), t - tol,
                               [](const Beat& b, double x) { return b.time < x; });
    if (it != beats.end() && std::abs(it->time - t) <= tol) return static_cast<std::size_t>(it - beats.begin());
    return std::nullopt;
}

std::optional<std::string> labelChord(const std::array<double, 12>& chroma) {
    const double norm = std::sqrt(std::inner_product(chroma.begin(), chroma.end(), chroma.begin(), 0.0));
    if (!(norm > 1e-9)) return std::nullopt;
    double best = -1.0;
    std::string label;
    for (int root = 0; root < 12; ++root) {
        for (int minor = 0; minor < 2; ++minor) {
            const int third = minor ? 3 : 4;
            const double score = (chroma[root] + chroma[(root + third) % 12] + chroma[(root + 7) % 12]) /
                                 (norm * std::sqrt(3.0));
            if (score > best + 1e-12) {
                best = score;
                label = std::string(kPitchNames[root]) + (minor ? ":min" : ":maj");
            }
        }
    }
    return label;
}

BeatTimeline annotateBeats(const AudioSignal& signal, std::span<const double> beat_times, const NoveltyCurve& novelty) {
    const double duration = signal.duration();
    for (std::size_t i = 0; i < beat_times.size(); ++i) {
        const double t = beat_times[i];
        if (!(t >= 0.0 && t <= duration)) {
            throw std::invalid_argument("annotateBeats: beat time " + std::to_string(t) + " outside the signal");
        }
        if (i > 0 && !(t > beat_times[i - 1])) throw std::invalid_argument("annotateBeats: beat times must increase");
    }

    BeatTimeline timeline;
    timeline.duration = duration;
    const auto n = static_cast<std::ptrdiff_t>(signal.samples.size());
    const auto half_window = static_cast<std::ptrdiff_t>(std::lround(0.1 * signal.sample_rate));
    for (std::size_t i = 0; i < beat_times.size(); ++i) {
        const double t = beat_times[i];
        Beat beat;
        beat.time = t;

        const auto centre = static_cast<std::ptrdiff_t>(std::lround(t * signal.sample_rate));
        const auto lo = std::clamp<std::ptrdiff_t>(centre - half_window, 0, n);
        const auto hi = std::clamp<std::ptrdiff_t>(centre + half_window, 0, n);
        double energy = 0.0;
        for (auto s = lo; s < hi; ++s) energy += signal.samples[static_cast<std::size_t>(s)] * signal.samples[static_cast<std::size_t>(s)];
        const double rms = hi > lo ? std::sqrt(energy / static_cast<double>(hi - lo)) : 0.0;
        beat.dbfs = rms > 0.0 ? std::max(kSilenceDbfs, 20.0 * std::log10(rms)) : kSilenceDbfs;

        if (!novelty.values.empty()) {
            beat.novelty = novelty.values[novelty.indexOf(t)];
            const double seg_end = i + 1 < beat_times.size() ? beat_times[i + 1] : duration;
            std::array<double, 12> chroma{};
            for (std::size_t f = novelty.indexOf(t); f < novelty.chroma.size() && novelty.timeOf(f) < seg_end; ++f) {
                for (std::size_t p = 0; p < 12; ++p) chroma[p] += novelty.chroma[f][p];
            }
            beat.chord = labelChord(chroma);
        }
        timeline.beats.push_back(std::move(beat));
    }
    return timeline;
}

BeatTimeline annotateBeats(const AudioSignal& signal, std::span<const double> beat_times) {
    return annotateBeats(signal, beat_times, spectralNovelty(signal));
}

AnalysisResult analyzeSong(const AudioSignal& signal, const MusicParams& params) {
    const NoveltyCurve novelty = spectralNovelty(signal, params.novelty);
    std::vector<double> times = detectBeats(novelty, params.min_gap, params.threshold);
    AnalysisResult result;
    result.detected = times.size();
    if (times.empty() || times.front() > params.anchor_after) {
        times.insert(times.begin(), 0.0);
        result.anchor_prepended = true;
    }
    result.timeline = annotateBeats(signal, times, novelty);
    return result;
}

nlohmann::json beatsToJson(const BeatTimeline& timeline) {
    auto doc = nlohmann::json::array();
    for (const auto& b : timeline.beats) {
        doc.push_back({{"t", b.time},
                       {"novelty", b.novelty},
                       {"dbfs", b.dbfs},
                       {"chord", b.chord ? nlohmann::json(*b.chord) : nlohmann::json(nullptr)}});
    }
    return doc;
}

BeatTimeline beatsFromJson(const nlohmann::json& doc) {
    const nlohmann::json* arr = &doc;
    BeatTimeline timeline;
    if (doc.is_object()) {
        arr = &doc.at("beats");
        timeline.duration = doc.value("duration", 0.0);
    }
    if (!arr->is_array()) throw std::invalid_argument("beats: expected an array of {t, novelty, dbfs, chord}");
    for (const auto& item : *arr) {
        Beat b;
        b.time = item.at("t").get<double>();
        b.novelty = item.value("novelty", 0.0);
        b.dbfs = item.value("dbfs", kSilenceDbfs);
        if (item.contains("chord") && item["chord"].is_string()) b.chord = item["chord"].get<std::string>();
        if (!timeline.beats.empty() && !(b.time > timeline.beats.back().time)) {
            throw std::invalid_argument("beats: times must be strictly increasing");
        }
        if (b.time < 0.0) throw std::invalid_argument("beats: negative beat time");
        timeline.beats.push_back(std::move(b));
    }
    if (!timeline.beats.empty()) timeline.duration = std::max(timeline.duration, timeline.beats.back().time);
    return timeline;
}

BeatTimeline loadBeats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open beat file " + path.string());
    return beatsFromJson(nlohmann::json::parse(in));
}

void saveBeats(const std::filesystem::path& path, const BeatTimeline& timeline) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write beat file " + path.string());
    out << beatsToJson(timeline).dump(2) << '\n';
}

}  // namespace swarmchor
