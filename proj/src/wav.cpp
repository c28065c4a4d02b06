//
//  wav.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/wav.hpp"
#include "bicilab/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace bicilab {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load(const std::uint8_t* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store(std::vector<std::uint8_t>& out, T v)
{
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

void store_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

} // namespace

SampleBuffer read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open WAV file " + path.string());
    const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
    if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 || std::memcmp(data.data() + 8, "WAVE", 4) != 0)
        throw fail("not a RIFF/WAVE file");

    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    const std::uint8_t* payload = nullptr;
    std::size_t payload_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const std::uint8_t* chunk = data.data() + pos;
        const auto size = load<std::uint32_t>(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > data.size() && std::memcmp(chunk, "data", 4) != 0)
            throw fail("truncated chunk");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16)
                throw fail("fmt chunk too small");
            format = load<std::uint16_t>(chunk + 8);
            channels = load<std::uint16_t>(chunk + 10);
            rate = load<std::uint32_t>(chunk + 12);
            bits = load<std::uint16_t>(chunk + 22);
            if (format == kFormatExtensible && size >= 40)
                format = load<std::uint16_t>(chunk + 32);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            payload = data.data() + body;
            payload_size = std::min<std::size_t>(size, data.size() - body);
        }
        pos = body + size + (size & 1u);
    }

    if (channels == 0 || !payload)
        throw fail("missing fmt or data chunk");
    if (channels > 2)
        throw fail("unsupported channel count " + std::to_string(channels));
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32)
        throw fail("unsupported sample format (format tag " + std::to_string(format) + ", " + std::to_string(bits) +
                   " bits); expected PCM16 or float32");

    const std::size_t bytes = bits / 8u;
    const auto frames = static_cast<Eigen::Index>(payload_size / (bytes * channels));
    Eigen::MatrixXd samples(frames, channels);
    for (Eigen::Index i = 0; i < frames; ++i) {
        for (Eigen::Index c = 0; c < channels; ++c) {
            const std::uint8_t* p = payload + (static_cast<std::size_t>(i) * channels + static_cast<std::size_t>(c)) * bytes;
            samples(i, c) = pcm16 ? load<std::int16_t>(p) / 32768.0 : static_cast<double>(load<float>(p));
        }
    }
    SampleBuffer buf(std::move(samples), static_cast<double>(rate));
    try {
        buf.validate();
    } catch (const std::invalid_argument& e) {
        throw fail(e.what());
    }
    return buf;
}

void write_wav(const std::filesystem::path& path, const SampleBuffer& buf, WavFormat format)
{
    buf.validate();
    const auto channels = static_cast<std::uint16_t>(buf.channels());
    const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
    const std::uint32_t block = channels * bits / 8u;
    const auto data_size = static_cast<std::uint32_t>(static_cast<std::size_t>(buf.frames()) * block);
    const auto rate = static_cast<std::uint32_t>(std::lround(buf.rate));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    store_tag(out, "RIFF");
    store<std::uint32_t>(out, 36 + data_size);
    store_tag(out, "WAVE");
    store_tag(out, "fmt ");
    store<std::uint32_t>(out, 16);
    store<std::uint16_t>(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
    store<std::uint16_t>(out, channels);
    store<std::uint32_t>(out, rate);
    store<std::uint32_t>(out, rate * block);
    store<std::uint16_t>(out, static_cast<std::uint16_t>(block));
    store<std::uint16_t>(out, bits);
    store_tag(out, "data");
    store<std::uint32_t>(out, data_size);
    for (Eigen::Index i = 0; i < buf.frames(); ++i) {
        for (Eigen::Index c = 0; c < buf.channels(); ++c) {
            const double v = buf.samples(i, c);
            if (format == WavFormat::pcm16)
                store<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L)));
            else
                store<float>(out, static_cast<float>(v));
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw DataError("cannot write WAV file " + path.string());
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

} // namespace bicilab
