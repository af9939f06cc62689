#include "oracles.hpp"

#include "swarmchor/music.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>

using namespace swarmchor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "swarmchor_music_test";
    fs::create_directories(dir);
    return dir / name;
}

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

/// Hand-rolled RIFF writer so the reader is checked against bytes it did not produce.
void writePcm16(const fs::path& path, int channels, const std::vector<std::int16_t>& interleaved, int sr = 44100) {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t data = static_cast<std::uint32_t>(interleaved.size() * 2);
    out.write("RIFF", 4);
    put<std::uint32_t>(out, 36 + data);
    out.write("WAVEfmt ", 8);
    put<std::uint32_t>(out, 16);
    put<std::uint16_t>(out, 1);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sr));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sr * channels * 2));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(channels * 2));
    put<std::uint16_t>(out, 16);
    out.write("data", 4);
    put<std::uint32_t>(out, data);
    for (auto s : interleaved) put(out, s);
}

}  // namespace

TEST(Wav, SilenceRoundTrip) {
    writePcm16(scratch("silence.wav"), 1, std::vector<std::int16_t>(44100, 0));
    const AudioSignal s = loadWav(scratch("silence.wav"));
    EXPECT_EQ(s.samples.size(), 44100u);
    EXPECT_DOUBLE_EQ(s.sample_rate, 44100.0);
    for (double v : s.samples) ASSERT_EQ(v, 0.0);
}

TEST(Wav, StereoDownmixOfIdenticalChannels) {
    std::vector<std::int16_t> mono, stereo;
    for (int i = 0; i < 1000; ++i) {
        const auto v = static_cast<std::int16_t>(1000.0 * std::sin(0.01 * i));
        mono.push_back(v);
        stereo.push_back(v);
        stereo.push_back(v);
    }
    writePcm16(scratch("m.wav"), 1, mono);
    writePcm16(scratch("s.wav"), 2, stereo);
    const AudioSignal a = loadWav(scratch("m.wav")), b = loadWav(scratch("s.wav"));
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) ASSERT_EQ(a.samples[i], b.samples[i]);
}

TEST(Wav, FullScaleSquarePcmScaling) {
    std::vector<std::int16_t> sq;
    for (int i = 0; i < 400; ++i) sq.push_back((i / 50) % 2 ? -32767 : 32767);
    writePcm16(scratch("sq.wav"), 1, sq);
    const AudioSignal s = loadWav(scratch("sq.wav"));
    for (double v : s.samples) ASSERT_DOUBLE_EQ(std::abs(v), 32767.0 / 32768.0);
}

TEST(Wav, MissingAndGarbageFilesAreReported) {
    EXPECT_THROW(loadWav(scratch("does_not_exist.wav")), WavError);
    std::ofstream(scratch("junk.wav")) << "not a wave file";
    EXPECT_THROW(loadWav(scratch("junk.wav")), WavError);
}

TEST(Wav, WriterRoundTrip) {
    const AudioSignal s = oracle::tones({440.0}, 0.2);
    writeWav16(scratch("rt.wav"), s);
    const AudioSignal r = loadWav(scratch("rt.wav"));
    ASSERT_EQ(r.samples.size(), s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) ASSERT_NEAR(r.samples[i], s.samples[i], 1.0 / 32768.0);
}

TEST(Novelty, SteadyToneIsFlat) {
    const NoveltyCurve n = spectralNovelty(oracle::tones({440.0}, 4.0));
    ASSERT_FALSE(n.values.empty());
    // Skip the attack at t = 0, which is a genuine onset.
    for (std::size_t i = n.indexOf(0.6); i < n.indexOf(3.4); ++i) ASSERT_LE(n.values[i], 0.05) << n.timeOf(i);
}

TEST(Novelty, SingleClickPeaksAtItsTime) {
    const AudioSignal s = oracle::clickTrack(1.0, 3.0, 1.0);
    const NoveltyCurve n = spectralNovelty(s);
    const auto it = std::max_element(n.values.begin(), n.values.end());
    const double hop = 512.0 / 44100.0;
    EXPECT_NEAR(n.timeOf(static_cast<std::size_t>(it - n.values.begin())), 1.0, hop);
    EXPECT_DOUBLE_EQ(*it, 1.0);
    for (double v : n.values) ASSERT_GE(v, 0.0);
}

TEST(Novelty, ClickPairSpacing) {
    AudioSignal s = oracle::clickTrack(120.0, 1.5, 0.75);  // clicks at 0.75 and 1.25
    const auto beats = detectBeats(spectralNovelty(s));
    ASSERT_EQ(beats.size(), 2u);
    EXPECT_NEAR(beats[1] - beats[0], 0.5, 512.0 / 44100.0 + 1e-9);
}

TEST(Novelty, TimeShiftCommutes) {
    const AudioSignal a = oracle::clickTrack(60.0, 6.0, 1.0);
    AudioSignal b = a;
    const std::size_t shift = 512 * 20;
    b.samples.insert(b.samples.begin(), shift, 0.0);
    b.samples.resize(a.samples.size());
    const NoveltyCurve na = spectralNovelty(a), nb = spectralNovelty(b);
    for (std::size_t i = 100; i + 20 < na.values.size() - 100; ++i) ASSERT_NEAR(nb.values[i + 20], na.values[i], 1e-6);
}

TEST(Beats, EmptyNoveltyGivesNoBeats) {
    NoveltyCurve n;
    n.frame_rate = 86.0;
    n.values.assign(500, 0.0);
    EXPECT_TRUE(detectBeats(n).empty());
}

TEST(Beats, ClickTrackAt120Bpm) {
    const auto truth = oracle::clickTimes(120.0, 30.0);
    const auto beats = detectBeats(spectralNovelty(oracle::clickTrack(120.0, 30.0)));
    ASSERT_EQ(beats.size(), truth.size());
    for (std::size_t i = 0; i < beats.size(); ++i) EXPECT_NEAR(beats[i], truth[i], 512.0 / 44100.0 + 1e-9);
}

TEST(Beats, ThinningKeepsLargerPeak) {
    NoveltyCurve n;
    n.frame_rate = 100.0;
    n.values.assign(300, 0.0);
    n.values[100] = 0.6;
    n.values[110] = 1.0;
    const auto b = detectBeats(n, 0.25, 0.3);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_NEAR(b[0], 1.1, 1e-12);
}

TEST(Beats, SortedGapsRespectMinimum) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    NoveltyCurve n;
    n.frame_rate = 86.0;
    for (int i = 0; i < 2000; ++i) n.values.push_back(U(rng));
    const auto b = detectBeats(n, 0.25, 0.3);
    for (std::size_t i = 1; i < b.size(); ++i) ASSERT_GE(b[i] - b[i - 1], 0.25 - 1e-12);
    EXPECT_EQ(b, detectBeats(n, 0.25, 0.3));
}

TEST(Beats, GainInvariance) {
    const AudioSignal base = oracle::clickTrack(100.0, 12.0);
    const auto ref = detectBeats(spectralNovelty(base));
    for (double g : {0.1, 0.35, 0.7, 1.0}) {
        AudioSignal s = base;
        for (double& v : s.samples) v *= g;
        const auto b = detectBeats(spectralNovelty(s));
        ASSERT_EQ(b.size(), ref.size()) << g;
        for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(b[i], ref[i], 512.0 / 44100.0 + 1e-9);
    }
}

TEST(Annotate, LoudnessOfFullScaleAndSilence) {
    AudioSignal s;
    s.samples.assign(44100 * 2, 1.0);
    s.samples.insert(s.samples.end(), 44100 * 2, 0.0);
    const std::vector<double> at{1.0, 3.0};
    const BeatTimeline tl = annotateBeats(s, at);
    ASSERT_EQ(tl.beats.size(), 2u);
    EXPECT_NEAR(tl.beats[0].dbfs, 0.0, 0.1);
    EXPECT_EQ(tl.beats[1].dbfs, kSilenceDbfs);
}

TEST(Annotate, CMajorTriad) {
    const AudioSignal s = oracle::tones({261.63, 329.63, 392.0}, 3.0);
    const std::vector<double> at{0.5, 2.5};
    const BeatTimeline tl = annotateBeats(s, at);
    ASSERT_TRUE(tl.beats[0].chord.has_value());
    EXPECT_EQ(*tl.beats[0].chord, "C:maj");
}

TEST(Annotate, MinorTriadTemplate) {
    std::array<double, 12> chroma{};
    chroma[9] = 1.0;  // A
    chroma[0] = 0.9;  // C
    chroma[4] = 0.8;  // E
    EXPECT_EQ(labelChord(chroma).value_or(""), "A:min");
    EXPECT_FALSE(labelChord(std::array<double, 12>{}).has_value());
}

TEST(Analyze, SilencePrependsAnchorOnly) {
    AudioSignal s;
    s.samples.assign(44100 * 3, 0.0);
    const AnalysisResult r = analyzeSong(s);
    EXPECT_EQ(r.detected, 0u);
    ASSERT_EQ(r.timeline.beats.size(), 1u);
    EXPECT_EQ(r.timeline.beats[0].time, 0.0);
    EXPECT_TRUE(r.anchor_prepended);
}

TEST(Analyze, TimelineInvariants) {
    const AnalysisResult r = analyzeSong(oracle::clickTrack(90.0, 10.0, 2.0));
    const auto t = r.timeline.times();
    EXPECT_TRUE(r.anchor_prepended);
    for (std::size_t i = 1; i < t.size(); ++i) ASSERT_GT(t[i], t[i - 1]);
    EXPECT_GE(t.front(), 0.0);
    EXPECT_LE(t.back(), r.timeline.duration);
}

TEST(BeatsJson, RoundTrip) {
    const AnalysisResult r = analyzeSong(oracle::clickTrack(120.0, 4.0));
    saveBeats(scratch("beats.json"), r.timeline);
    const BeatTimeline back = loadBeats(scratch("beats.json"));
    ASSERT_EQ(back.beats.size(), r.timeline.beats.size());
    for (std::size_t i = 0; i < back.beats.size(); ++i) {
        EXPECT_NEAR(back.beats[i].time, r.timeline.beats[i].time, 1e-9);
        EXPECT_EQ(back.beats[i].chord, r.timeline.beats[i].chord);
    }
    EXPECT_TRUE(back.find(r.timeline.beats[1].time + 1e-4, 2e-3).has_value());
}
