#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace swarmchor {

/// Mono waveform with samples in [-1, 1].
struct AudioSignal {
    std::vector<double> samples;
    double sample_rate = 44100.0;

    double duration() const {
        return sample_rate > 0.0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

class WavError : public std::runtime_error {
public:
    enum class Kind { Unreadable, UnsupportedEncoding };
    WavError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Reads 16-bit PCM or 32/64-bit float WAV, mono or multichannel (averaged down to mono).
AudioSignal loadWav(const std::filesystem::path& path);
/// Writes 16-bit PCM (mono). Used for fixtures and round trips.
void writeWav16(const std::filesystem::path& path, const AudioSignal& signal);

struct NoveltyParams {
    int frame = 2048;
    int hop = 512;
    double gamma = 1000.0;               ///< log compression log(1 + gamma |X|)
    double local_average_seconds = 0.5;
    /// Raw flux below this (per spectral bin) is treated as "no onset" and not stretched to 1.
    double onset_floor = 0.2;
};

struct NoveltyCurve {
    std::vector<double> values;
    double frame_rate = 0.0;   ///< values per second (sample_rate / hop)
    double time_offset = 0.0;  ///< time stamp of values[0] in seconds
    /// Per-frame 12-bin pitch-class energy, aligned with values.
    std::vector<std::array<double, 12>> chroma;

    double timeOf(std::size_t index) const { return time_offset + static_cast<double>(index) / frame_rate; }
    /// Nearest frame index for a time, clamped into range.
    std::size_t indexOf(double t) const;
};

/// Log-compressed spectral flux with local-average subtraction, peak-normalized.
NoveltyCurve spectralNovelty(const AudioSignal& signal, const NoveltyParams& params = {});

/// Local maxima above threshold * max, greedily thinned (larger peak wins) to be >= min_gap apart.
std::vector<double> detectBeats(const NoveltyCurve& novelty, double min_gap = 0.25, double threshold = 0.3);

struct Beat {
    double time = 0.0;
    double novelty = 0.0;
    double dbfs = -120.0;
    std::optional<std::string> chord;
};

struct BeatTimeline {
    std::vector<Beat> beats;
    double duration = 0.0;

    std::vector<double> times() const;
    /// Index of the beat within tol of t, if any.
    std::optional<std::size_t> find(double t, double tol) const;
};

inline constexpr double kSilenceDbfs = -120.0;

/// Loudness (RMS over +-0.1 s), novelty at the beat frame, and a major/minor triad label
/// from the chroma between this beat and the next.
BeatTimeline annotateBeats(const AudioSignal& signal, std::span<const double> beat_times,
                           const NoveltyCurve& novelty);
BeatTimeline annotateBeats(const AudioSignal& signal, std::span<const double> beat_times);

/// Chord label ("C:maj", "A:min") for a chroma vector, or nullopt when it carries no energy.
std::optional<std::string> labelChord(const std::array<double, 12>& chroma);

struct MusicParams {
    NoveltyParams novelty;
    double min_gap = 0.25;
    double threshold = 0.3;
    /// A t = 0 anchor is prepended when the first detected beat is later than this.
    double anchor_after = 1.0;
};

struct AnalysisResult {
    BeatTimeline timeline;
    bool anchor_prepended = false;
    std::size_t detected = 0;
};

AnalysisResult analyzeSong(const AudioSignal& signal, const MusicParams& params = {});

nlohmann::json beatsToJson(const BeatTimeline& timeline);
/// Accepts the array form written by beatsToJson, or {"duration": .., "beats": [..]}.
BeatTimeline beatsFromJson(const nlohmann::json& doc);
BeatTimeline loadBeats(const std::filesystem::path& path);
void saveBeats(const std::filesystem::path& path, const BeatTimeline& timeline);

}  // namespace swarmchor
