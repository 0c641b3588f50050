#include "hutk/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hutk/io.hpp"

namespace hutk {

Waveform read_wav(const std::string& path) {
    BinReader in(path, ErrorCode::MalformedWav);
    require(in.magic() == "RIFF", ErrorCode::MalformedWav, "not a RIFF file: " + path);
    in.u32();  // riff size, unused
    require(in.magic() == "WAVE", ErrorCode::MalformedWav, "not a WAVE file: " + path);

    bool have_fmt = false;
    uint16_t format = 0;
    uint16_t channels = 0;
    uint32_t sample_rate = 0;
    uint16_t bits = 0;
    std::vector<float> samples;
    bool have_data = false;

    while (!in.at_eof()) {
        char tag[4];
        if (!in.try_bytes(tag, 4)) {
            break;
        }
        const std::string id(tag, 4);
        const uint32_t size = in.u32();
        if (id == "fmt ") {
            require(size >= 16, ErrorCode::MalformedWav, "fmt chunk too small: " + path);
            format = in.u16();
            channels = in.u16();
            sample_rate = in.u32();
            in.u32();  // byte rate
            in.u16();  // block align
            bits = in.u16();
            if (size > 16) {
                in.skip(size - 16);
            }
            have_fmt = true;
        } else if (id == "data") {
            require(have_fmt, ErrorCode::MalformedWav, "data chunk before fmt: " + path);
            require(format == 1 && bits == 16, ErrorCode::UnsupportedFormat,
                    "only PCM-16 supported: " + path);
            require(channels == 1, ErrorCode::UnsupportedFormat, "only mono supported: " + path);
            require(sample_rate == 16000, ErrorCode::UnsupportedSampleRate,
                    "expected 16000 Hz, got " + std::to_string(sample_rate) + ": " + path);
            require(size % 2 == 0, ErrorCode::MalformedWav, "odd data chunk size: " + path);
            const size_t n = size / 2;
            samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                samples[i] = static_cast<float>(in.i16()) / 32768.0f;
            }
            have_data = true;
        } else {
            in.skip(size + (size % 2));
        }
        if (id == "data" && size % 2 != 0) {
            in.skip(1);
        }
    }
    require(have_fmt && have_data, ErrorCode::MalformedWav, "missing fmt or data chunk: " + path);
    require(!samples.empty(), ErrorCode::MalformedWav, "empty data chunk: " + path);
    return Waveform{std::move(samples), static_cast<int>(sample_rate)};
}

void write_wav(const std::string& path, const Waveform& w) {
    require(!w.samples.empty(), ErrorCode::BadConfig, "refusing to write empty waveform");
    const uint32_t n = static_cast<uint32_t>(w.samples.size());
    const uint32_t data_size = n * 2;
    BinWriter out(path);
    out.magic("RIFF");
    out.u32(36 + data_size);
    out.magic("WAVE");
    out.magic("fmt ");
    out.u32(16);
    out.u16(1);  // PCM
    out.u16(1);  // mono
    out.u32(static_cast<uint32_t>(w.sample_rate));
    out.u32(static_cast<uint32_t>(w.sample_rate) * 2);
    out.u16(2);   // block align
    out.u16(16);  // bits
    out.magic("data");
    out.u32(data_size);
    for (float s : w.samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        const long v = std::lround(static_cast<double>(c) * 32768.0);
        out.i16(static_cast<int16_t>(std::clamp(v, -32768L, 32767L)));
    }
    out.close();
}

}  // namespace hutk
