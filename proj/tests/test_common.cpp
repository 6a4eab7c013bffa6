#include "crowdscene/audio.hpp"
#include "crowdscene/common.hpp"

#include <doctest.h>

#include "support.hpp"

using namespace crowdscene;

TEST_CASE("scene labels round-trip through codes and names") {
    CHECK(kAllLabels.size() == 5);
    for (int c = 0; c < kClassCount; ++c) {
        const SceneLabel l = label_from_code(c);
        CHECK(label_code(l) == c);
        CHECK(parse_label(label_name(l)) == l);
    }
    CHECK(label_name(SceneLabel::NoiseStreet) == "noise_street");
    CHECK(label_name(SceneLabel::SportAtmosphere) == "sport_atmosphere");
    CHECK_FALSE(parse_label("Riot").has_value());
    CHECK_THROWS_AS(label_from_code(5), std::out_of_range);
}

TEST_CASE("argmax ties go to the lowest code") {
    ProbVector p = ProbVector::Constant(0.2);
    CHECK(argmax_lowest(p) == 0);
    p << 0.1, 0.4, 0.1, 0.4, 0.0;
    CHECK(argmax_lowest(p) == 1);
    CHECK(is_valid_prob(p));
    p(0) = -0.1;
    CHECK_FALSE(is_valid_prob(p));
}

TEST_CASE("WAV encode/decode round-trips 16-bit PCM") {
    PcmBuffer pcm = testsupport::tone(440.0, 0.25, 16000, 0.8);
    const auto bytes = encode_wav(pcm);
    CHECK(bytes.size() == 44 + 2 * pcm.samples.size());
    const PcmBuffer back = decode_wav(bytes);
    CHECK(back.sample_rate == 16000);
    REQUIRE(back.samples.size() == pcm.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < pcm.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - pcm.samples[i]));
    CHECK(worst < 1e-4);
}

TEST_CASE("stereo WAV is downmixed by averaging") {
    // 2 channels, 2 frames: (1000, 3000), (-2000, 0)
    std::vector<unsigned char> wav = {'R', 'I', 'F', 'F', 44, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ',
                                      16, 0, 0, 0, 1, 0, 2, 0, 0x80, 0x3E, 0, 0, 0, 0xFA, 0, 0, 4, 0, 16, 0,
                                      'd', 'a', 't', 'a', 8, 0, 0, 0};
    for (int v : {1000, 3000, -2000, 0}) {
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
        wav.push_back(static_cast<unsigned char>(u & 0xFF));
        wav.push_back(static_cast<unsigned char>(u >> 8));
    }
    const PcmBuffer pcm = decode_wav(wav);
    REQUIRE(pcm.samples.size() == 2);
    CHECK(pcm.samples[0] == doctest::Approx(2000.0 / 32768.0));
    CHECK(pcm.samples[1] == doctest::Approx(-1000.0 / 32768.0));
}

TEST_CASE("garbage bytes are rejected") {
    const std::vector<unsigned char> junk = {'n', 'o', 't', ' ', 'a', ' ', 'w', 'a', 'v'};
    CHECK_THROWS_AS(decode_wav(junk), WavFormatError);
}
