#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aiacycle/signal.hpp"

namespace aiacycle {

// PCM16 mono 16 kHz little-endian only; anything else is rejected with the
// offending property in the message.

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x & 0xff));
    v.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
    v.push_back(static_cast<unsigned char>((x >> 16) & 0xff));
    v.push_back(static_cast<unsigned char>((x >> 24) & 0xff));
}

inline void put_u16(std::vector<unsigned char>& v, std::uint16_t x) {
    v.push_back(static_cast<unsigned char>(x & 0xff));
    v.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_wav: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("read_wav: " + path + " is not a RIFF/WAVE file");

    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t chunk_len = detail::read_u32(bytes.data() + pos + 4);
        const unsigned char* id = bytes.data() + pos;
        const std::size_t body = pos + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (body + 16 > bytes.size()) throw std::runtime_error("read_wav: truncated fmt chunk in " + path);
            const std::uint16_t format = detail::read_u16(bytes.data() + body);
            const std::uint16_t channels = detail::read_u16(bytes.data() + body + 2);
            const std::uint32_t rate = detail::read_u32(bytes.data() + body + 4);
            const std::uint16_t bits = detail::read_u16(bytes.data() + body + 14);
            if (format != 1) throw std::runtime_error("read_wav: " + path + " is not PCM (format tag " + std::to_string(format) + ")");
            if (channels != 1) throw std::runtime_error("read_wav: " + path + " has " + std::to_string(channels) + " channels, expected mono");
            if (rate != kSampleRate)
                throw std::runtime_error("read_wav: " + path + " sample rate " + std::to_string(rate) + " != 16000");
            if (bits != 16) throw std::runtime_error("read_wav: " + path + " has " + std::to_string(bits) + " bits per sample, expected 16");
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = chunk_len;
        }
        pos = body + chunk_len + (chunk_len & 1);
    }
    if (!have_fmt) throw std::runtime_error("read_wav: " + path + " has no fmt chunk");
    if (data_off == 0) throw std::runtime_error("read_wav: " + path + " has no data chunk");
    if (data_off + data_len > bytes.size()) throw std::runtime_error("read_wav: truncated data chunk in " + path);

    Waveform w;
    w.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const std::int16_t s = static_cast<std::int16_t>(detail::read_u16(bytes.data() + data_off + 2 * i));
        w.samples[i] = static_cast<float>(s) / 32768.0f;
    }
    return w;
}

inline void write_wav(const std::string& path, const Waveform& wave) {
    const std::uint32_t n = static_cast<std::uint32_t>(wave.samples.size());
    std::vector<unsigned char> bytes;
    bytes.reserve(44 + 2 * n);
    const char* riff = "RIFF";
    bytes.insert(bytes.end(), riff, riff + 4);
    detail::put_u32(bytes, 36 + 2 * n);
    const char* wavefmt = "WAVEfmt ";
    bytes.insert(bytes.end(), wavefmt, wavefmt + 8);
    detail::put_u32(bytes, 16);
    detail::put_u16(bytes, 1);                      // PCM
    detail::put_u16(bytes, 1);                      // mono
    detail::put_u32(bytes, kSampleRate);
    detail::put_u32(bytes, kSampleRate * 2);        // byte rate
    detail::put_u16(bytes, 2);                      // block align
    detail::put_u16(bytes, 16);                     // bits
    const char* data = "data";
    bytes.insert(bytes.end(), data, data + 4);
    detail::put_u32(bytes, 2 * n);
    for (float s : wave.samples) {
        long q = std::lrint(static_cast<double>(std::min(1.0f, std::max(-1.0f, s))) * 32768.0);
        q = std::min(32767l, std::max(-32768l, q));
        detail::put_u16(bytes, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_wav: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write_wav: failed writing " + path);
}

}  // namespace aiacycle
