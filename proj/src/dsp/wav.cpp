#include "melsynth/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace melsynth::dsp {

namespace {

template <class T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("wav: truncated file");
    return v;
}

}  // namespace

Waveform read_wav(const std::string& path, int expected_rate_hz) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("wav: cannot open " + path);

    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0)
        throw std::runtime_error("wav: not a RIFF file: " + path);
    read_pod<std::uint32_t>(is);  // riff size
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0)
        throw std::runtime_error("wav: not a WAVE file: " + path);

    std::uint16_t channels = 0, bits = 0, format = 0;
    std::uint32_t rate = 0;
    std::vector<std::int16_t> pcm;
    bool got_fmt = false, got_data = false;
    while (is && !(got_fmt && got_data)) {
        is.read(tag, 4);
        if (!is) break;
        const auto chunk_size = read_pod<std::uint32_t>(is);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_pod<std::uint16_t>(is);
            channels = read_pod<std::uint16_t>(is);
            rate = read_pod<std::uint32_t>(is);
            read_pod<std::uint32_t>(is);  // byte rate
            read_pod<std::uint16_t>(is);  // block align
            bits = read_pod<std::uint16_t>(is);
            if (chunk_size > 16) is.seekg(chunk_size - 16, std::ios::cur);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            pcm.resize(chunk_size / 2);
            is.read(reinterpret_cast<char*>(pcm.data()), chunk_size & ~1u);
            if (!is) throw std::runtime_error("wav: truncated data chunk in " + path);
            got_data = true;
        } else {
            is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
        }
    }
    if (!got_fmt || !got_data) throw std::runtime_error("wav: missing fmt/data chunk in " + path);
    if (format != 1) throw std::runtime_error("wav: only PCM supported: " + path);
    if (bits != 16) throw std::runtime_error("wav: only 16-bit samples supported: " + path);
    if (channels != 1) throw std::runtime_error("wav: only mono supported: " + path);
    if (expected_rate_hz > 0 && static_cast<int>(rate) != expected_rate_hz)
        throw std::runtime_error("wav: sample rate " + std::to_string(rate) +
                                 " does not match configured rate " +
                                 std::to_string(expected_rate_hz) + ": " + path);

    Waveform w;
    w.sample_rate_hz = static_cast<int>(rate);
    w.samples.resize(pcm.size());
    for (std::size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32768.0;
    return w;
}

void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("wav: cannot open " + path + " for writing");

    const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    os.write("RIFF", 4);
    write_pod<std::uint32_t>(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    write_pod<std::uint32_t>(os, 16);
    write_pod<std::uint16_t>(os, 1);  // PCM
    write_pod<std::uint16_t>(os, 1);  // mono
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate_hz));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate_hz * 2));
    write_pod<std::uint16_t>(os, 2);
    write_pod<std::uint16_t>(os, 16);
    os.write("data", 4);
    write_pod<std::uint32_t>(os, data_bytes);
    for (double s : w.samples) {
        const double scaled = std::round(s * 32768.0);
        const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        write_pod<std::int16_t>(os, v);
    }
    if (!os) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace melsynth::dsp
