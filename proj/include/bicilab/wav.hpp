//
//  wav.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include "bicilab/dsp.hpp"

#include <filesystem>

namespace bicilab {

enum class WavFormat { pcm16, float32 };

/// Reads a RIFF/WAVE file holding PCM16 or IEEE float32 samples, mono or stereo.
/// Throws DataError on anything else.
SampleBuffer read_wav(const std::filesystem::path& path);

/// PCM16 output is clipped to [-1, 1) and rounded to the nearest step.
void write_wav(const std::filesystem::path& path, const SampleBuffer& buf, WavFormat format = WavFormat::float32);

} // namespace bicilab
