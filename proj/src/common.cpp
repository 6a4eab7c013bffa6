#include "crowdscene/common.hpp"

#include <cmath>

namespace crowdscene {

namespace {

constexpr std::array<std::string_view, kClassCount> kNames = {
    "riot", "noise_street", "firework_event", "music_event", "sport_atmosphere"};

constexpr std::array<std::string_view, kClassCount> kDisplayNames = {
    "Riot", "Noise-Street", "Firework-Event", "Music-Event", "Sport-Atmosphere"};

}  // namespace

SceneLabel label_from_code(int code) {
    if (code < 0 || code >= kClassCount) {
        throw std::out_of_range("scene label code out of range: " + std::to_string(code));
    }
    return static_cast<SceneLabel>(code);
}

std::string_view label_name(SceneLabel label) { return kNames[label_code(label)]; }

std::string_view label_display_name(SceneLabel label) {
    return kDisplayNames[label_code(label)];
}

std::optional<SceneLabel> parse_label(std::string_view name) {
    for (int c = 0; c < kClassCount; ++c) {
        if (kNames[c] == name) return static_cast<SceneLabel>(c);
    }
    return std::nullopt;
}

bool is_valid_prob(const ProbVector& p, double tol) {
    if (!p.allFinite()) return false;
    if ((p.array() < 0.0).any()) return false;
    return std::abs(p.sum() - 1.0) <= tol;
}

}  // namespace crowdscene
