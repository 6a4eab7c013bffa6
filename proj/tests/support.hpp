#pragma once

#include "crowdscene/audio.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("crowdscene_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline crowdscene::PcmBuffer tone(double hz, double seconds, int rate = 32000, double amp = 0.5) {
    crowdscene::PcmBuffer pcm;
    pcm.sample_rate = rate;
    pcm.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (std::size_t i = 0; i < pcm.samples.size(); ++i) {
        pcm.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
    }
    return pcm;
}

inline crowdscene::PcmBuffer white_noise(double seconds, std::uint64_t seed, int rate = 32000, double sd = 0.1) {
    crowdscene::PcmBuffer pcm;
    pcm.sample_rate = rate;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    pcm.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (auto& s : pcm.samples) s = g(rng);
    return pcm;
}

}  // namespace testsupport
