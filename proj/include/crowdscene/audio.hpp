#pragma once

#include "crowdscene/common.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace crowdscene {

CROWDSCENE_DEFINE_ERROR(WavFormatError);

/// Mono PCM samples in [-1, 1].
struct PcmBuffer {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Decodes a RIFF/WAVE byte stream. Accepts 16-bit PCM (the interchange format)
/// and 32-bit float; multi-channel input is downmixed by averaging channels.
PcmBuffer decode_wav(std::span<const unsigned char> bytes);

PcmBuffer read_wav(const std::filesystem::path& path);

/// 16-bit PCM mono. Samples are clipped to [-1, 1] before quantization.
std::vector<unsigned char> encode_wav(const PcmBuffer& pcm);

void write_wav(const std::filesystem::path& path, const PcmBuffer& pcm);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace crowdscene
