#include "swarmchor/music.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace swarmchor {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T readLe(const std::uint8_t* p) {
    T v{};
    std::memcpy(&v, p, sizeof(T));
    return v;  // little-endian host assumed (x86/ARM)
}

template <typename T>
void writeLe(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioSignal loadWav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WavError(WavError::Kind::Unreadable, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw WavError(WavError::Kind::Unreadable, path.string() + ": not a RIFF/WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const auto size = readLe<std::uint32_t>(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw WavError(WavError::Kind::Unreadable, path.string() + ": truncated fmt chunk");
            format = readLe<std::uint16_t>(chunk + 8);
            channels = readLe<std::uint16_t>(chunk + 10);
            rate = readLe<std::uint32_t>(chunk + 12);
            bits = readLe<std::uint16_t>(chunk + 22);
            if (format == kFormatExtensible && avail >= 26) {
                format = readLe<std::uint16_t>(chunk + 32);  // first two bytes of the subformat GUID
            }
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = avail;
        }
        pos = body + size + (size & 1U);
    }

    if (channels == 0 || rate == 0) throw WavError(WavError::Kind::Unreadable, path.string() + ": missing fmt chunk");
    if (data == nullptr) throw WavError(WavError::Kind::Unreadable, path.string() + ": missing data chunk");
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    const bool f64 = format == kFormatFloat && bits == 64;
    if (!pcm16 && !f32 && !f64) {
        throw WavError(WavError::Kind::UnsupportedEncoding,
                       path.string() + ": unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frames = data_size / (bytes_per_sample * channels);
    AudioSignal signal;
    signal.sample_rate = rate;
    signal.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = data + (i * channels + c) * bytes_per_sample;
            double s = 0.0;
            if (pcm16) {
                s = readLe<std::int16_t>(p) / 32768.0;
            } else if (f32) {
                s = readLe<float>(p);
            } else {
                s = readLe<double>(p);
            }
            acc += s;
        }
        signal.samples[i] = std::clamp(acc / channels, -1.0, 1.0);
    }
    return signal;
}

void writeWav16(const std::filesystem::path& path, const AudioSignal& signal) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WavError(WavError::Kind::Unreadable, "cannot write " + path.string());
    const auto n = static_cast<std::uint32_t>(signal.samples.size());
    const auto rate = static_cast<std::uint32_t>(signal.sample_rate);
    out.write("RIFF", 4);
    writeLe<std::uint32_t>(out, 36 + n * 2);
    out.write("WAVEfmt ", 8);
    writeLe<std::uint32_t>(out, 16);
    writeLe<std::uint16_t>(out, kFormatPcm);
    writeLe<std::uint16_t>(out, 1);
    writeLe<std::uint32_t>(out, rate);
    writeLe<std::uint32_t>(out, rate * 2);
    writeLe<std::uint16_t>(out, 2);
    writeLe<std::uint16_t>(out, 16);
    out.write("data", 4);
    writeLe<std::uint32_t>(out, n * 2);
    for (double s : signal.samples) {
        const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
        writeLe<std::int16_t>(out, static_cast<std::int16_t>(scaled));
    }
}

}  // namespace swarmchor
