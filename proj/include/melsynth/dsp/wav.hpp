#pragma once

#include <string>

#include "melsynth/dsp/dsp.hpp"

namespace melsynth::dsp {

// RIFF PCM, 16-bit little-endian signed, mono. No resampling: the reader
// rejects files whose rate differs from expected_rate_hz (pass 0 to accept any).
Waveform read_wav(const std::string& path, int expected_rate_hz);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace melsynth::dsp
