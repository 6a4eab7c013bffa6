#include "crowdscene/dsp.hpp"

#include <doctest.h>

#include "support.hpp"

#include <algorithm>
#include <cmath>

using namespace crowdscene;
using namespace crowdscene::dsp;

namespace {

const DspConfig kCfg{};
constexpr SpectrogramKind kKinds[] = {SpectrogramKind::Mel, SpectrogramKind::Cqt, SpectrogramKind::Gam};

int row_argmax(const RowMatrix<float>& m, Eigen::Index row) {
    Eigen::Index best = 0;
    m.row(row).maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

TEST_CASE("resample: length ratio, identity and DC preservation") {
    const PcmBuffer one_second = testsupport::white_noise(1.0, 3, 16000);
    const PcmBuffer up = resample(one_second, 32000);
    CHECK(up.sample_rate == 32000);
    CHECK(up.samples.size() == 32000);

    const PcmBuffer same = resample(up, 32000);
    CHECK(same.samples == up.samples);

    PcmBuffer dc;
    dc.sample_rate = 44100;
    dc.samples.assign(44100, 0.5);
    for (int target : {32000, 16000, 48000}) {
        const PcmBuffer r = resample(dc, target);
        CHECK(r.samples.size() == static_cast<std::size_t>(target));
        double worst = 0.0;
        for (double v : r.samples) worst = std::max(worst, std::abs(v - 0.5));
        CHECK(worst < 1e-6);
    }
    CHECK_THROWS_AS(resample(PcmBuffer{{}, 16000}, 32000), EmptyInput);
}

TEST_CASE("resample keeps an in-band tone and removes one above the new Nyquist") {
    const PcmBuffer mixed = [] {
        PcmBuffer a = testsupport::tone(1000.0, 1.0, 32000, 0.5);
        const PcmBuffer b = testsupport::tone(12000.0, 1.0, 32000, 0.5);
        for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] += b.samples[i];
        return a;
    }();
    const PcmBuffer down = resample(mixed, 16000);
    const PcmBuffer ref = testsupport::tone(1000.0, 1.0, 16000, 0.5);
    double err = 0.0;
    for (std::size_t i = 1000; i < 15000; ++i) err = std::max(err, std::abs(down.samples[i] - ref.samples[i]));
    CHECK(err < 0.02);
}

TEST_CASE("10 s at 32 kHz gives 640 x 128 for every kind and 5 patches") {
    const PcmBuffer pcm = testsupport::white_noise(10.0, 1);
    for (SpectrogramKind kind : kKinds) {
        CAPTURE(kind_name(kind));
        const auto spec = compute_spectrogram(kind, pcm);
        CHECK(spec.frames() == 640);
        CHECK(spec.bins() == 128);
        CHECK(spec.hop_samples == 500);
        CHECK(spec.values.allFinite());
        const auto patches = patchify(spec, "seg#0");
        CHECK(patches.size() == 5);
        for (const auto& p : patches) CHECK(p.values.cols() == 128 * 128);
    }
}

TEST_CASE("silence maps every cell to the log floor") {
    PcmBuffer silence;
    silence.sample_rate = 32000;
    silence.samples.assign(320000, 0.0);
    const float floor_value = static_cast<float>(std::log(kCfg.log_floor));
    for (SpectrogramKind kind : kKinds) {
        CAPTURE(kind_name(kind));
        const auto spec = compute_spectrogram(kind, silence);
        CHECK(spec.values.minCoeff() == floor_value);
        CHECK(spec.values.maxCoeff() == floor_value);
    }
}

TEST_CASE("spectrograms are bit-identical across runs") {
    const PcmBuffer pcm = testsupport::white_noise(3.0, 9);
    for (SpectrogramKind kind : kKinds) {
        const auto a = compute_spectrogram(kind, pcm);
        const auto b = compute_spectrogram(kind, pcm);
        CHECK(a.values == b.values);
    }
}

TEST_CASE("mel filterbank rows are non-negative with positive support") {
    const Eigen::MatrixXd fb = mel_filterbank(kCfg);
    CHECK(fb.rows() == 128);
    CHECK(fb.cols() == kCfg.fft_size / 2 + 1);
    CHECK(fb.minCoeff() >= 0.0);
    for (Eigen::Index r = 0; r < fb.rows(); ++r) CHECK(fb.row(r).maxCoeff() > 0.0);
}

TEST_CASE("1 kHz tone peaks in the filter that responds most to 1 kHz") {
    // Oracle: 1 kHz sits exactly on FFT bin 1000 * 4096 / 32000 = 128.
    const Eigen::MatrixXd fb = mel_filterbank(kCfg);
    Eigen::Index expected = 0;
    fb.col(128).maxCoeff(&expected);
    const auto spec = mel_spectrogram(testsupport::tone(1000.0, 10.0));
    for (Eigen::Index t = 0; t < spec.frames(); ++t) CHECK(row_argmax(spec.values, t) == expected);
}

TEST_CASE("440 Hz tone peaks within one CQT bin of the nearest center") {
    const auto centers = cqt_center_frequencies(kCfg);
    CHECK(centers.front() == doctest::Approx(32.7));
    CHECK(centers[16] == doctest::Approx(65.4));
    std::size_t nearest = 0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        if (std::abs(centers[k] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = k;
    }
    CHECK(nearest == 60);
    const auto spec = cqt_spectrogram(testsupport::tone(440.0, 10.0));
    for (Eigen::Index t = 10; t < spec.frames() - 10; ++t) {
        CHECK(std::abs(row_argmax(spec.values, t) - static_cast<int>(nearest)) <= 1);
    }
}

TEST_CASE("gammatone energy under white noise follows channel bandwidth") {
    const auto centers = gammatone_center_frequencies(kCfg);
    REQUIRE(centers.size() == 128);
    CHECK(centers.front() == doctest::Approx(50.0));
    CHECK(centers.back() == doctest::Approx(16000.0));
    for (std::size_t c = 1; c < centers.size(); ++c) CHECK(centers[c] > centers[c - 1]);

    const auto spec = gam_spectrogram(testsupport::white_noise(10.0, 42));
    const Eigen::ArrayXd energy = spec.values.cast<double>().array().exp().colwise().mean().transpose();
    // Channels whose passband stays clear of the Nyquist frequency.
    std::size_t usable = 0;
    while (usable < centers.size() && centers[usable] + 3.0 * erb_bandwidth(centers[usable]) < 16000.0) ++usable;
    REQUIRE(usable > 100);
    for (std::size_t c = 1; c < usable; ++c) {
        CAPTURE(c);
        CHECK(energy(static_cast<Eigen::Index>(c)) >= 0.97 * energy(static_cast<Eigen::Index>(c - 1)));
    }
    // Energy per unit bandwidth is flat for white noise.
    Eigen::ArrayXd density(static_cast<Eigen::Index>(usable));
    for (std::size_t c = 0; c < usable; ++c) density(static_cast<Eigen::Index>(c)) = energy(static_cast<Eigen::Index>(c)) / erb_bandwidth(centers[c]);
    CHECK(density.maxCoeff() / density.minCoeff() < 1.25);
}

TEST_CASE("patchify tiles, drops the remainder and reassembles exactly") {
    Spectrogram<float> spec;
    spec.values = RowMatrix<float>::Random(700, 128);
    const auto patches = patchify(spec, "v#1");
    REQUIRE(patches.size() == 5);
    for (int p = 0; p < 5; ++p) {
        CHECK(patches[p].index == p);
        CHECK(patches[p].segment_id == "v#1");
        for (int r = 0; r < 128; ++r) {
            for (int c = 0; c < 128; ++c) REQUIRE(patches[p].at(0, r, c) == spec.values(p * 128 + r, c));
        }
    }

    Spectrogram<float> one;
    one.values = RowMatrix<float>::Random(128, 128);
    const auto single = patchify(one);
    REQUIRE(single.size() == 1);
    CHECK(Eigen::Map<const RowMatrix<float>>(single[0].values.data(), 128, 128) == one.values);

    Spectrogram<float> wrong;
    wrong.values = RowMatrix<float>::Zero(640, 64);
    CHECK_THROWS_AS(patchify(wrong), BadBins);
}

TEST_CASE("frontends reject wrong rates and too-short input") {
    CHECK_THROWS_AS(mel_spectrogram(testsupport::tone(440.0, 1.0, 16000)), WrongRate);
    CHECK_THROWS_AS(gam_spectrogram(testsupport::tone(440.0, 0.01)), TooShort);
    CHECK_THROWS_AS(cqt_spectrogram(PcmBuffer{{}, 32000}), EmptyInput);
    const auto resampled = extract_features(SpectrogramKind::Mel, testsupport::tone(440.0, 10.0, 16000));
    CHECK(resampled.frames() == 640);
}

TEST_CASE("feature standardization yields zero mean and unit variance per bin") {
    RowMatrix<float> a = RowMatrix<float>::Random(50, 128) * 3.0f;
    RowMatrix<float> b = RowMatrix<float>::Random(70, 128) + RowMatrix<float>::Constant(70, 128, 2.0f);
    const FeatureStats stats = FeatureStats::fit({&a, &b});
    stats.apply(a);
    stats.apply(b);
    RowMatrix<float> all(120, 128);
    all << a, b;
    const Eigen::ArrayXd mean = all.cast<double>().colwise().mean().transpose();
    const Eigen::ArrayXd var = (all.cast<double>().rowwise() - mean.matrix().transpose()).array().square().colwise().mean().transpose();
    CHECK(mean.abs().maxCoeff() < 1e-5);
    CHECK((var - 1.0).abs().maxCoeff() < 1e-4);
}
