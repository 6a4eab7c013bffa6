#pragma once

#include "crowdscene/audio.hpp"
#include "crowdscene/image.hpp"
#include "crowdscene/manifest.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>

namespace crowdscene::synth {

/// Acoustic texture of one synthetic class.
enum class AudioTexture {
    ModulatedNoiseBand,  // chant-like band of noise with slow amplitude modulation
    LowRumble,           // dense low-frequency partials
    ImpulsiveBursts,     // decaying broadband bursts over near silence
    HarmonicStack,       // melodic notes with harmonic partials
    WhistleChirps,       // rising tonal sweeps over faint crowd noise
};

enum class VisualPattern { Blobs, HorizontalStripes, Sparks, VerticalStripes, FieldLines };

struct ClassGenerator {
    AudioTexture audio;
    VisualPattern visual;
    std::array<unsigned char, 3> base_color;
};

struct SynthSpec {
    std::array<ClassGenerator, kClassCount> classes = default_generators();
    int train_per_class = 20;
    int test_per_class = 10;
    int segments_per_video = 2;
    int sample_rate = 32000;
    bool with_frames = false;
    int frames_per_segment = 3;
    std::uint64_t rng_seed = 1;

    static std::array<ClassGenerator, kClassCount> default_generators();
};

/// One 10-second clip of the given class; deterministic in `seed`.
PcmBuffer synthesize_audio(const ClassGenerator& gen, int sample_rate, std::uint64_t seed);

image::RgbImage synthesize_frame(const ClassGenerator& gen, std::uint64_t seed);

/// Writes audio/<segment>.wav, optional frames/<segment>/frame_NNN.ppm and
/// manifest.csv under `out_dir`; returns the loaded manifest.
manifest::DatasetManifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace crowdscene::synth
