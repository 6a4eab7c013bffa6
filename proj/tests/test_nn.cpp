#include "doctest.h"
#include "oracles.hpp"

#include "crowdscene/nn/adam.hpp"
#include "crowdscene/nn/model.hpp"
#include "crowdscene/nn/objective.hpp"
#include "crowdscene/nn/train.hpp"

#include <cmath>
#include <set>

using namespace crowdscene;
using namespace crowdscene::nn;

namespace {

ProbVector pv(double a, double b, double c, double d, double e) {
    ProbVector p;
    p << a, b, c, d, e;
    return p;
}

std::vector<const Tensor<double>*> tensors(const Network<double>& n) {
    std::vector<const Tensor<double>*> out;
    n.visit([&](const std::string&, const Tensor<double>& t, bool) { out.push_back(&t); });
    return out;
}

double max_abs_diff(const Network<double>& a, const Network<double>& b) {
    const auto ta = tensors(a), tb = tensors(b);
    double m = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) m = std::max(m, (*ta[i] - *tb[i]).cwiseAbs().maxCoeff());
    return m;
}

}  // namespace

TEST_CASE("vgg15 stage shapes follow the architecture table") {
    for (int channels : {1, 3}) {
        const auto net = build_vgg15<float>(channels, kClassCount, 7);
        const auto input = oracle::random_patches<float>(2, channels, 128, 3);
        std::vector<StageShape> trace;
        const auto probs = forward<float>(net, input, Mode::Infer, nullptr, &trace);
        CHECK(trace == oracle::vgg15_table());
        REQUIRE(probs.size() == 2);
        for (const auto& p : probs) CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("vgg15 construction is seeded and differs only at the input between 1 and 3 channels") {
    const auto a = build_vgg15<float>(1, kClassCount, 11);
    const auto b = build_vgg15<float>(1, kClassCount, 11);
    const auto c = build_vgg15<float>(3, kClassCount, 11);
    std::vector<std::pair<std::string, std::vector<Eigen::Index>>> sa, sc;
    std::vector<const Tensor<float>*> ta, tb;
    a.visit([&](const std::string& n, const Tensor<float>& t, bool) {
        sa.push_back({n, {t.rows(), t.cols()}});
        ta.push_back(&t);
    });
    b.visit([&](const std::string&, const Tensor<float>& t, bool) { tb.push_back(&t); });
    c.visit([&](const std::string& n, const Tensor<float>& t, bool) { sc.push_back({n, {t.rows(), t.cols()}}); });
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
    REQUIRE(sa.size() == sc.size());
    std::set<std::string> differing;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].first == sc[i].first);
        if (sa[i].second != sc[i].second) differing.insert(sa[i].first);
    }
    CHECK(differing == std::set<std::string>{"conv0.bn_in.gamma", "conv0.bn_in.beta", "conv0.bn_in.running_mean",
                                             "conv0.bn_in.running_var", "conv0.kernel"});
    CHECK(a.conv[0].kernel.cols() == 9);
    CHECK(c.conv[0].kernel.cols() == 27);
    CHECK_THROWS_AS(build_vgg15<float>(2, kClassCount, 1), Error);
}

TEST_CASE("all-zero parameters give the uniform distribution") {
    const auto net = build_network<double>(oracle::tiny_spec(), 5).zeros_like();
    const auto input = oracle::random_patches<double>(3, 2, 4, 9);
    for (const auto& p : forward<double>(net, input, Mode::Infer)) {
        for (int c = 0; c < kClassCount; ++c) CHECK(p(c) == doctest::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("kl loss oracles") {
    const auto empty = build_network<double>(oracle::tiny_spec(), 1).zeros_like();
    const std::vector<ProbVector> y{pv(0.5, 0.5, 0, 0, 0)};
    const std::vector<ProbVector> yh{pv(0.25, 0.75, 0, 0, 0)};
    // 0.5 ln 2 + 0.5 ln(2/3)
    CHECK(kl_loss<double>(y, yh, empty, 0.0) == doctest::Approx(0.143841036).epsilon(1e-8));
    CHECK(kl_loss<double>(y, y, empty, 0.0) == doctest::Approx(0.0));

    const std::vector<ProbVector> onehot{pv(0, 0, 1, 0, 0)};
    const std::vector<ProbVector> pred{pv(0.1, 0.2, 0.4, 0.2, 0.1)};
    CHECK(kl_loss<double>(onehot, pred, empty, 0.0) == doctest::Approx(-std::log(0.4)));

    // zero prediction on a positive target is clipped instead of diverging
    const std::vector<ProbVector> zero{pv(0, 0, 0, 0.5, 0.5)};
    CHECK(std::isfinite(kl_loss<double>(onehot, zero, empty, 0.0)));

    auto reg = empty;
    reg.conv[0].kernel(0, 0) = 2.0;  // ||theta||^2 = 4
    CHECK(kl_loss<double>(y, y, reg, 0.01) == doctest::Approx(0.02));
    // running statistics are not parameters
    reg.conv[0].bn_in.running_var.setConstant(100.0);
    CHECK(kl_loss<double>(y, y, reg, 0.01) == doctest::Approx(0.02));
}

TEST_CASE("analytic gradients match central differences") {
    const auto net = build_network<double>(oracle::tiny_spec(), 21);
    const auto batch = oracle::random_patches<double>(3, 2, 4, 22);
    const auto labels = oracle::random_soft_labels(3, 23);
    const auto check = oracle::gradient_check(net, batch, labels, 0.01, 24);
    CHECK(check.checked == net.trainable_count());
    CHECK(check.max_rel_error < 1e-4);

    SUBCASE("with hidden dense layers") {
        auto spec = oracle::tiny_spec();
        spec.dense = {{6, 0.25}};
        const auto deep = build_network<double>(spec, 31);
        const auto c = oracle::gradient_check(deep, batch, labels, 0.001, 32);
        CHECK(c.max_rel_error < 1e-4);
    }
}

TEST_CASE("regularizer adds lambda * theta to the gradient") {
    const auto net = build_network<double>(oracle::tiny_spec(), 41);
    const auto batch = oracle::random_patches<double>(4, 2, 4, 42);
    const auto labels = oracle::random_soft_labels(4, 43);
    Rng r0(5), r1(5);
    const auto g0 = gradients<double>(net, batch, labels, 0.0, r0).grads;
    const auto g1 = gradients<double>(net, batch, labels, 0.1, r1).grads;
    const auto t0 = tensors(g0), t1 = tensors(g1), tp = tensors(net);
    std::size_t k = 0;
    net.visit([&](const std::string&, const Tensor<double>&, bool trainable) {
        const std::size_t i = k++;
        const Tensor<double> expected = trainable ? Tensor<double>(*t0[i] + 0.1 * *tp[i]) : *t0[i];
        CHECK((*t1[i] - expected).cwiseAbs().maxCoeff() < 1e-12);
    });
}

TEST_CASE("duplicating every sample doubles the data gradient") {
    NetworkSpec spec;
    spec.input_channels = 1;
    spec.input_size = 4;
    const auto net = build_network<double>(spec, 51);  // classifier only, no batch statistics
    const auto one = oracle::random_patches<double>(2, 1, 4, 52);
    const auto y = oracle::random_soft_labels(2, 53);
    std::vector<dsp::Patch<double>> two = one;
    two.insert(two.end(), one.begin(), one.end());
    std::vector<ProbVector> yy = y;
    yy.insert(yy.end(), y.begin(), y.end());
    Rng r1(1), r2(1);
    const auto a = gradients<double>(net, one, y, 0.0, r1);
    const auto b = gradients<double>(net, two, yy, 0.0, r2);
    CHECK(b.loss == doctest::Approx(2.0 * a.loss));
    const auto ta = tensors(a.grads), tb = tensors(b.grads);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK((*tb[i] - 2.0 * *ta[i]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batch order does not change loss or gradient without dropout") {
    auto spec = oracle::tiny_spec();
    for (auto& b : spec.conv) b.dropout = 0.0;
    const auto net = build_network<double>(spec, 61);
    auto batch = oracle::random_patches<double>(4, 2, 4, 62);
    auto labels = oracle::random_soft_labels(4, 63);
    Rng r1(1), r2(1);
    const auto a = gradients<double>(net, batch, labels, 0.01, r1);
    std::reverse(batch.begin(), batch.end());
    std::reverse(labels.begin(), labels.end());
    const auto b = gradients<double>(net, batch, labels, 0.01, r2);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK(max_abs_diff(a.grads, b.grads) < 1e-12);
}

TEST_CASE("adam step") {
    const auto net = build_network<double>(oracle::tiny_spec(), 71);
    const AdamConfig cfg{.learning_rate = 1e-3};

    SUBCASE("zero gradient leaves parameters unchanged") {
        auto p = net;
        auto state = AdamState<double>::init(p);
        adam_step(p, p.zeros_like(), state, cfg);
        CHECK(max_abs_diff(p, net) == 0.0);
    }
    SUBCASE("unit gradient moves every trainable entry by the learning rate") {
        auto p = net;
        auto ones = net.zeros_like();
        ones.visit([](const std::string&, Tensor<double>& t, bool) { t.setOnes(); });
        auto state = AdamState<double>::init(p);
        for (int step = 1; step <= 3; ++step) {
            const auto before = p;
            adam_step(p, ones, state, cfg);
            const auto tb = tensors(before), ta = tensors(p);
            std::size_t k = 0;
            p.visit([&](const std::string&, const Tensor<double>&, bool trainable) {
                const std::size_t i = k++;
                const Tensor<double> delta = *tb[i] - *ta[i];
                if (trainable) {
                    CHECK(delta.minCoeff() == doctest::Approx(1e-3).epsilon(1e-6));
                    CHECK(delta.maxCoeff() == doctest::Approx(1e-3).epsilon(1e-6));
                } else {
                    CHECK(delta.cwiseAbs().maxCoeff() == 0.0);
                }
            });
        }
        CHECK(state.step == 3);
    }
    SUBCASE("deterministic") {
        auto p1 = net, p2 = net;
        const auto g = net;  // any fixed tensor set
        auto s1 = AdamState<double>::init(p1), s2 = AdamState<double>::init(p2);
        for (int i = 0; i < 4; ++i) {
            adam_step(p1, g, s1, cfg);
            adam_step(p2, g, s2, cfg);
        }
        CHECK(max_abs_diff(p1, p2) == 0.0);
    }
}

namespace {

NetworkSpec small_128() {
    NetworkSpec s;
    s.input_channels = 1;
    s.input_size = 128;
    s.conv = {{8, Pool::Global, 0.0}};
    return s;
}

std::vector<TrainSegment> toy_segments(int per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.3f);
    std::vector<TrainSegment> out;
    for (SceneLabel l : kAllLabels) {
        for (int k = 0; k < per_class; ++k) {
            TrainSegment s;
            s.label = l;
            auto p = dsp::Patch<float>::zeros(1);
            for (int r = 0; r < 128; ++r) {
                for (int c = 0; c < 128; ++c) {
                    float v = 0.0f;
                    switch (l) {
                        case SceneLabel::Riot: v = (c % 2 == 0) ? 1.0f : -1.0f; break;
                        case SceneLabel::NoiseStreet: v = (r % 2 == 0) ? 1.0f : -1.0f; break;
                        case SceneLabel::FireworkEvent: v = ((r + c) % 2 == 0) ? 1.0f : -1.0f; break;
                        case SceneLabel::MusicEvent: v = 1.5f; break;
                        case SceneLabel::SportAtmosphere: v = -1.5f; break;
                    }
                    p.at(0, r, c) = v + noise(rng);
                }
            }
            s.patches.push_back(std::move(p));
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fit learns a separable toy problem and reports per-epoch history") {
    const auto data = toy_segments(4, 81);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.adam.learning_rate = 3e-2;
    cfg.l2_lambda = 1e-4;
    cfg.batch_size = 5;
    cfg.rng_seed = 3;
    augment::AugmentConfig aug;
    aug.rng_seed = 4;
    int calls = 0;
    const auto result = fit(build_network<float>(small_128(), 82), data, cfg, aug,
                            [&](const EpochStats&, const Network<float>&, bool) { ++calls; });
    CHECK(calls == 30);
    REQUIRE(result.history.epochs.size() == 30);
    CHECK(result.history.epochs.back().loss < result.history.epochs.front().loss);

    int correct = 0;
    for (const auto& s : data) {
        const auto p = forward<float>(result.params, s.patches, Mode::Infer);
        correct += argmax_lowest(p[0]) == label_code(s.label) ? 1 : 0;
    }
    CHECK(correct >= 18);

    SUBCASE("same seeds reproduce the run") {
        const auto again = fit(build_network<float>(small_128(), 82), data, cfg, aug);
        CHECK(again.history.epochs.back().loss == result.history.epochs.back().loss);
    }
}

TEST_CASE("fit rejects invalid configuration") {
    const auto data = toy_segments(1, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(fit(build_network<float>(small_128(), 1), data, cfg, {}), Error);
    cfg.epochs = 1;
    CHECK_THROWS_AS(fit(build_network<float>(small_128(), 1), {}, cfg, {}), Error);
}

TEST_CASE("batch-norm recalibration recovers the pooled input statistics") {
    auto net = build_network<float>(small_128(), 91);
    const auto patches = oracle::random_patches<float>(7, 1, 128, 92);
    recalibrate_batchnorm(net, patches, 3);
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto& p : patches) {
        const Eigen::ArrayXd v = p.values.cast<double>().reshaped().array();
        sum += v.sum();
        sq += v.square().sum();
        n += static_cast<double>(v.size());
    }
    const double mean = sum / n;
    CHECK(net.conv[0].bn_in.running_mean(0, 0) == doctest::Approx(mean).epsilon(1e-4));
    CHECK(net.conv[0].bn_in.running_var(0, 0) == doctest::Approx(sq / n - mean * mean).epsilon(1e-4));
}
