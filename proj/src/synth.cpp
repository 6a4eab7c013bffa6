#include "crowdscene/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <iomanip>

namespace crowdscene::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSeconds = manifest::kSegmentSeconds;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return splitmix(splitmix(splitmix(base ^ a) ^ (b << 8)) ^ (c << 16));
}

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Adds a sinusoid using a recursive phasor (renormalised every second).
void add_tone(std::vector<double>& out, int fs, double hz, double amp, double phase, std::size_t begin = 0,
              std::size_t end = std::string::npos) {
    end = std::min(end, out.size());
    const std::complex<double> step = std::polar(1.0, kTwoPi * hz / fs);
    std::complex<double> rot = std::polar(1.0, phase + kTwoPi * hz * static_cast<double>(begin) / fs);
    for (std::size_t i = begin; i < end; ++i) {
        out[i] += amp * rot.imag();
        rot *= step;
        if ((i - begin) % static_cast<std::size_t>(fs) == 0) rot /= std::abs(rot);
    }
}

void add_noise_band(std::vector<double>& out, int fs, double lo, double hi, int partials, double amp, Rng& rng) {
    const double per = amp / std::sqrt(static_cast<double>(partials));
    for (int k = 0; k < partials; ++k) {
        add_tone(out, fs, uniform(rng, lo, hi), per * uniform(rng, 0.6, 1.4), uniform(rng, 0.0, kTwoPi));
    }
}

}  // namespace

std::array<ClassGenerator, kClassCount> SynthSpec::default_generators() {
    return {{
        {AudioTexture::ModulatedNoiseBand, VisualPattern::Blobs, {200, 60, 30}},
        {AudioTexture::LowRumble, VisualPattern::HorizontalStripes, {110, 110, 120}},
        {AudioTexture::ImpulsiveBursts, VisualPattern::Sparks, {20, 20, 50}},
        {AudioTexture::HarmonicStack, VisualPattern::VerticalStripes, {130, 50, 170}},
        {AudioTexture::WhistleChirps, VisualPattern::FieldLines, {40, 150, 50}},
    }};
}

PcmBuffer synthesize_audio(const ClassGenerator& gen, int sample_rate, std::uint64_t seed) {
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(kSeconds * sample_rate));
    std::vector<double> x(n, 0.0);
    const int fs = sample_rate;
    std::normal_distribution<double> gauss(0.0, 1.0);

    switch (gen.audio) {
        case AudioTexture::ModulatedNoiseBand: {
            const double center = uniform(rng, 1200.0, 1800.0);
            add_noise_band(x, fs, center - 400.0, center + 400.0, 48, 0.25, rng);
            const double rate = uniform(rng, 2.5, 4.5);
            const double ph = uniform(rng, 0.0, kTwoPi);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] *= 0.6 + 0.4 * std::sin(kTwoPi * rate * static_cast<double>(i) / fs + ph);
            }
            break;
        }
        case AudioTexture::LowRumble: {
            add_noise_band(x, fs, 40.0, uniform(rng, 300.0, 450.0), 48, 0.35, rng);
            const double swell = uniform(rng, 0.05, 0.2);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] *= 0.75 + 0.25 * std::sin(kTwoPi * swell * static_cast<double>(i) / fs);
            }
            break;
        }
        case AudioTexture::ImpulsiveBursts: {
            double t = uniform(rng, 0.05, 0.4);
            while (t < kSeconds) {
                const auto start = static_cast<std::size_t>(t * fs);
                const double amp = uniform(rng, 0.3, 0.7);
                const double decay = uniform(rng, 0.03, 0.08) * fs;
                const auto len = static_cast<std::size_t>(6.0 * decay);
                for (std::size_t i = 0; i < len && start + i < n; ++i) {
                    x[start + i] += amp * std::exp(-static_cast<double>(i) / decay) * std::clamp(gauss(rng), -3.0, 3.0) / 3.0;
                }
                t += uniform(rng, 0.25, 0.9);
            }
            break;
        }
        case AudioTexture::HarmonicStack: {
            const double base = uniform(rng, 110.0, 220.0);
            const double note_len = uniform(rng, 0.4, 0.8);
            constexpr int kScale[] = {0, 2, 4, 5, 7, 9, 11, 12};
            std::size_t begin = 0;
            while (begin < n) {
                const auto end = std::min(n, begin + static_cast<std::size_t>(note_len * fs));
                const double f0 = base * std::pow(2.0, kScale[rng() % 8] / 12.0);
                for (int h = 1; h <= 8; ++h) {
                    if (f0 * h < fs / 2.0) add_tone(x, fs, f0 * h, 0.18 / h, uniform(rng, 0.0, kTwoPi), begin, end);
                }
                begin = end;
            }
            break;
        }
        case AudioTexture::WhistleChirps: {
            add_noise_band(x, fs, 200.0, 900.0, 24, 0.05, rng);
            double t = uniform(rng, 0.0, 0.5);
            while (t < kSeconds) {
                const double dur = uniform(rng, 0.3, 0.7);
                const double f_lo = uniform(rng, 2400.0, 3000.0);
                const double f_hi = f_lo + uniform(rng, 600.0, 1200.0);
                const auto start = static_cast<std::size_t>(t * fs);
                const auto len = static_cast<std::size_t>(dur * fs);
                double phase = 0.0;
                for (std::size_t i = 0; i < len && start + i < n; ++i) {
                    const double u = static_cast<double>(i) / static_cast<double>(len);
                    phase += kTwoPi * (f_lo + (f_hi - f_lo) * u) / fs;
                    x[start + i] += 0.3 * std::sin(kTwoPi * 0.5 * u) * std::sin(phase);
                }
                t += dur + uniform(rng, 0.1, 0.6);
            }
            break;
        }
    }
    for (auto& v : x) v = std::clamp(v + 0.005 * gauss(rng), -1.0, 1.0);
    return PcmBuffer{std::move(x), sample_rate};
}

image::RgbImage synthesize_frame(const ClassGenerator& gen, std::uint64_t seed) {
    Rng rng(seed);
    constexpr int kSize = 128;
    image::RgbImage img;
    img.width = img.height = kSize;
    img.pixels.resize(static_cast<std::size_t>(kSize) * kSize * 3);
    std::normal_distribution<double> gauss(0.0, 12.0);
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double period = uniform(rng, 10.0, 20.0);
    std::vector<std::pair<double, double>> spots(12);
    for (auto& s : spots) s = {uniform(rng, 0.0, kSize), uniform(rng, 0.0, kSize)};

    for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
            double intensity = 1.0;
            switch (gen.visual) {
                case VisualPattern::Blobs: {
                    double best = 1e9;
                    for (const auto& [sx, sy] : spots) best = std::min(best, std::hypot(x - sx, y - sy));
                    intensity = best < 14.0 ? 1.25 : 0.6;
                    break;
                }
                case VisualPattern::HorizontalStripes:
                    intensity = 0.8 + 0.3 * std::sin(kTwoPi * y / period + phase);
                    break;
                case VisualPattern::Sparks: {
                    double best = 1e9;
                    for (const auto& [sx, sy] : spots) best = std::min(best, std::hypot(x - sx, y - sy));
                    intensity = best < 3.0 ? 9.0 : 1.0;
                    break;
                }
                case VisualPattern::VerticalStripes:
                    intensity = 0.8 + 0.3 * std::sin(kTwoPi * x / period + phase);
                    break;
                case VisualPattern::FieldLines:
                    intensity = (static_cast<int>(x + phase * 10.0) % 32) < 2 ? 3.5 : 1.0;
                    break;
            }
            for (int c = 0; c < 3; ++c) {
                const double v = gen.base_color[c] * intensity + gauss(rng);
                img.pixels[(static_cast<std::size_t>(y) * kSize + x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return img;
}

manifest::DatasetManifest generate_corpus(const SynthSpec& spec, const fs::path& out_dir) {
    if (spec.train_per_class < 0 || spec.test_per_class < 0 || spec.segments_per_video < 1) {
        throw Error("synth spec: counts must be non-negative and segments_per_video >= 1");
    }
    std::error_code ec;
    fs::create_directories(out_dir / "audio", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "audio").string() + ": " + ec.message());

    std::vector<manifest::SegmentRecord> records;
    for (int split_code = 0; split_code < 2; ++split_code) {
        const auto split = static_cast<manifest::Split>(split_code);
        const int per_class = split == manifest::Split::Train ? spec.train_per_class : spec.test_per_class;
        for (int c = 0; c < kClassCount; ++c) {
            const SceneLabel label = label_from_code(c);
            for (int k = 0; k < per_class; ++k) {
                manifest::SegmentRecord r;
                std::ostringstream vid;
                vid << "syn_" << manifest::split_name(split) << '_' << label_name(label) << '_'
                    << std::setw(4) << std::setfill('0') << k / spec.segments_per_video;
                r.video_id = vid.str();
                r.segment_index = k % spec.segments_per_video;
                r.start_s = r.segment_index * manifest::kSegmentSeconds;
                r.label = label;
                r.split = split;
                const std::string stem = r.video_id + "_" + std::to_string(r.segment_index);
                const std::uint64_t seed = derive_seed(spec.rng_seed, static_cast<std::uint64_t>(split_code),
                                                       static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k));
                r.audio_path = out_dir / "audio" / (stem + ".wav");
                write_wav(r.audio_path, synthesize_audio(spec.classes[c], spec.sample_rate, seed));
                if (spec.with_frames) {
                    r.frames_dir = out_dir / "frames" / stem;
                    for (int f = 0; f < spec.frames_per_segment; ++f) {
                        std::ostringstream name;
                        name << "frame_" << std::setw(3) << std::setfill('0') << f << ".ppm";
                        image::write_ppm(r.frames_dir / name.str(),
                                         synthesize_frame(spec.classes[c], splitmix(seed + 1 + f)));
                    }
                }
                records.push_back(std::move(r));
            }
        }
    }
    manifest::DatasetManifest m(std::move(records));
    manifest::write_manifest(out_dir / "manifest.csv", m);
    return manifest::load_manifest(out_dir / "manifest.csv");
}

}  // namespace crowdscene::synth
