//
//  signals.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//
//  Seeded synthetic sources for tests and corpus-free runs.
//

#pragma once

#include "bicilab/dsp.hpp"

#include <cstdint>

namespace bicilab {

/// Voiced, speech-like source: a harmonic complex with a gliding f0,
/// formant-like spectral tilt and a 4 Hz syllabic envelope. Peak ~0.5.
SampleBuffer synthetic_speech(std::uint64_t seed, double seconds, double rate = 16000.0);

/// Stationary noise with a speech-like long-term spectrum (white noise
/// through a one-pole low-pass). RMS ~0.1.
SampleBuffer synthetic_noise(std::uint64_t seed, double seconds, double rate = 16000.0);

/// Sine tone.
SampleBuffer tone(double freq_hz, double amplitude, double seconds, double rate = 16000.0);

} // namespace bicilab
