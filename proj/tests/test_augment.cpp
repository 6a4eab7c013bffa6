#include "crowdscene/augment.hpp"

#include <doctest.h>

using namespace crowdscene;
using namespace crowdscene::augment;

namespace {

Patch<float> constant_patch(float v, int channels = 1) {
    auto p = Patch<float>::zeros(channels);
    p.values.setConstant(v);
    return p;
}

Patch<float> random_patch(Rng& rng, int channels = 1) {
    auto p = Patch<float>::zeros(channels);
    std::normal_distribution<float> g;
    for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = g(rng);
    return p;
}

SoftLabel random_label(Rng& rng) {
    SoftLabel y;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int c = 0; c < kClassCount; ++c) y(c) = u(rng);
    return y / y.sum();
}

}  // namespace

TEST_CASE("spec_augment on an all-ones patch zeroes exactly 2460 cells") {
    AugmentConfig cfg;
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto out = spec_augment(constant_patch(1.0f), cfg, rng);
        const auto zeros = (out.values.array() == 0.0f).count();
        CHECK(zeros == 10 * 128 + 128 * 10 - 10 * 10);
        CHECK((out.values.array() == 1.0f).count() == 128 * 128 - zeros);
    }
}

TEST_CASE("spec_augment masks contiguous bands at the same place in every channel") {
    AugmentConfig cfg;
    cfg.freq_mask_width = 7;
    cfg.time_mask_width = 13;
    Rng rng(11);
    const auto out = spec_augment(constant_patch(2.0f, 3), cfg, rng);
    std::vector<int> zero_rows, zero_cols;
    for (int r = 0; r < 128; ++r) {
        bool all = true;
        for (int c = 0; c < 128; ++c) all = all && out.at(0, r, c) == 0.0f;
        if (all) zero_rows.push_back(r);
    }
    for (int c = 0; c < 128; ++c) {
        bool all = true;
        for (int r = 0; r < 128; ++r) all = all && out.at(0, r, c) == 0.0f;
        if (all) zero_cols.push_back(c);
    }
    REQUIRE(zero_rows.size() == 13);
    REQUIRE(zero_cols.size() == 7);
    CHECK(zero_rows.back() - zero_rows.front() == 12);
    CHECK(zero_cols.back() - zero_cols.front() == 6);
    CHECK(out.values.row(1) == out.values.row(0));
    CHECK(out.values.row(2) == out.values.row(0));
}

TEST_CASE("zero-width masks leave the patch untouched and seeds reproduce") {
    AugmentConfig off;
    off.freq_mask_width = 0;
    off.time_mask_width = 0;
    Rng rng(3);
    const auto p = random_patch(rng);
    CHECK(spec_augment(p, off, rng).values == p.values);

    AugmentConfig cfg;
    Rng a(99), b(99);
    CHECK(spec_augment(p, cfg, a).values == spec_augment(p, cfg, b).values);
}

TEST_CASE("mixup special cases") {
    Rng rng(1);
    const auto x = random_patch(rng);
    const SoftLabel ya = one_hot(SceneLabel::Riot), yb = one_hot(SceneLabel::NoiseStreet);

    const auto same = mixup_pair(x, ya, x, yb, 0.5);
    CHECK((same.x1.values - x.values).cwiseAbs().maxCoeff() < 1e-6f);
    CHECK((same.x2.values - x.values).cwiseAbs().maxCoeff() < 1e-6f);
    CHECK(same.y1.isApprox(0.5 * (ya + yb)));

    const auto xb = random_patch(rng);
    const auto id = mixup_pair(x, ya, xb, yb, 1.0);
    CHECK(id.x1.values == x.values);
    CHECK(id.x2.values == xb.values);
    CHECK(id.y1 == ya);
    CHECK(id.y2 == yb);

    const auto seven = mixup_pair(x, ya, xb, yb, 0.7);
    SoftLabel expected;
    expected << 0.7, 0.3, 0.0, 0.0, 0.0;
    CHECK((seven.y1 - expected).cwiseAbs().maxCoeff() < 1e-12);

    auto wrong = Patch<float>::zeros(3);
    CHECK_THROWS_AS(mixup_pair(x, ya, wrong, yb, 0.5), ShapeMismatch);
}

TEST_CASE("mixup conserves mass, keeps labels normalized and is symmetric") {
    Rng rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_patch(rng), b = random_patch(rng);
        const SoftLabel ya = random_label(rng), yb = random_label(rng);
        const double g = u(rng);
        const auto m = mixup_pair(a, ya, b, yb, g);
        CHECK(((m.x1.values + m.x2.values) - (a.values + b.values)).cwiseAbs().maxCoeff() < 1e-5f);
        CHECK(((m.y1 + m.y2) - (ya + yb)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(m.y1.sum() - 1.0) < 1e-6);
        CHECK(std::abs(m.y2.sum() - 1.0) < 1e-6);
        const auto s = mixup_pair(b, yb, a, ya, g);
        CHECK((s.x1.values - m.x2.values).cwiseAbs().maxCoeff() < 1e-6f);
        CHECK((s.x2.values - m.x1.values).cwiseAbs().maxCoeff() < 1e-6f);
        CHECK(s.y1.isApprox(m.y2));
    }
}

TEST_CASE("augment_batch doubles the batch reproducibly") {
    Rng src(8);
    std::vector<Patch<float>> patches;
    std::vector<SoftLabel> labels;
    for (int i = 0; i < 8; ++i) {
        patches.push_back(random_patch(src));
        labels.push_back(one_hot(label_from_code(i % 5)));
    }
    AugmentConfig cfg;
    Rng r1(4), r2(4);
    const auto b1 = augment_batch(patches, labels, cfg, r1);
    const auto b2 = augment_batch(patches, labels, cfg, r2);
    REQUIRE(b1.patches.size() == 16);
    REQUIRE(b1.labels.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(b1.patches[i].values == b2.patches[i].values);
        CHECK(b1.labels[i] == b2.labels[i]);
        CHECK(std::abs(b1.labels[i].sum() - 1.0) < 1e-6);
    }
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(b1.labels[i] == labels[i]);
        CHECK((b1.patches[i].values.array() == 0.0f).count() >= 2460);
    }
}

TEST_CASE("beta mixing coefficients stay in [0, 1] and config is validated") {
    AugmentConfig cfg;
    cfg.mixup_distribution = MixupDistribution::Beta;
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const double g = draw_gamma(cfg, rng);
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
    }
    cfg.freq_mask_width = 129;
    CHECK_THROWS(cfg.validate());
    AugmentConfig p;
    p.apply_probability = 1.5;
    CHECK_THROWS(p.validate());
}
