#include "crowdscene/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace crowdscene {

namespace {

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) |
           (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

bool tag_is(std::span<const unsigned char> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

PcmBuffer decode_wav(std::span<const unsigned char> bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw WavFormatError("not a RIFF/WAVE stream");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::span<const unsigned char> data;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
        if (tag_is(bytes, pos, "fmt ")) {
            if (avail < 16) throw WavFormatError("truncated fmt chunk");
            format = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            rate = read_u32(bytes, body + 4);
            bits = read_u16(bytes, body + 14);
            if (format == 0xFFFE && avail >= 26) format = read_u16(bytes, body + 24);
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            data = bytes.subspan(body, avail);
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt) throw WavFormatError("missing fmt chunk");
    if (data.data() == nullptr) throw WavFormatError("missing data chunk");
    if (channels == 0 || rate == 0) throw WavFormatError("invalid channel count or sample rate");

    const bool pcm16 = format == 1 && bits == 16;
    const bool f32 = format == 3 && bits == 32;
    if (!pcm16 && !f32) {
        throw WavFormatError("unsupported WAV encoding (format " + std::to_string(format) +
                             ", " + std::to_string(bits) + " bits)");
    }
    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data.size() / frame_bytes;

    PcmBuffer pcm;
    pcm.sample_rate = static_cast<int>(rate);
    pcm.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t at = f * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                acc += static_cast<std::int16_t>(read_u16(data, at)) / 32768.0;
            } else {
                const std::uint32_t raw = read_u32(data, at);
                float v;
                std::memcpy(&v, &raw, sizeof v);
                acc += v;
            }
        }
        pcm.samples[f] = acc / channels;
    }
    return pcm;
}

PcmBuffer read_wav(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_wav(bytes);
    } catch (const WavFormatError& e) {
        throw WavFormatError(path.string() + ": " + e.what());
    }
}

std::vector<unsigned char> encode_wav(const PcmBuffer& pcm) {
    const auto n = static_cast<std::uint32_t>(pcm.samples.size());
    std::vector<unsigned char> out;
    out.reserve(44 + 2 * static_cast<std::size_t>(n));
    put_tag(out, "RIFF");
    put_u32(out, 36 + 2 * n);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(pcm.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(pcm.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    put_tag(out, "data");
    put_u32(out, 2 * n);
    for (double s : pcm.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const PcmBuffer& pcm) {
    write_file_bytes(path, encode_wav(pcm));
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace crowdscene
