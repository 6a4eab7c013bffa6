#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdscene {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CROWDSCENE_DEFINE_ERROR(Name)              \
    class Name : public ::crowdscene::Error {      \
    public:                                        \
        using ::crowdscene::Error::Error;          \
    }

CROWDSCENE_DEFINE_ERROR(IoError);
CROWDSCENE_DEFINE_ERROR(ShapeMismatch);

inline constexpr int kClassCount = 5;

enum class SceneLabel : int {
    Riot = 0,
    NoiseStreet = 1,
    FireworkEvent = 2,
    MusicEvent = 3,
    SportAtmosphere = 4,
};

inline constexpr std::array<SceneLabel, kClassCount> kAllLabels = {
    SceneLabel::Riot, SceneLabel::NoiseStreet, SceneLabel::FireworkEvent,
    SceneLabel::MusicEvent, SceneLabel::SportAtmosphere};

constexpr int label_code(SceneLabel label) { return static_cast<int>(label); }

/// Throws std::out_of_range for codes outside [0, 5).
SceneLabel label_from_code(int code);

/// Serialized form used in manifests and CSV headers, e.g. "noise_street".
std::string_view label_name(SceneLabel label);

/// Human-readable form, e.g. "Noise-Street".
std::string_view label_display_name(SceneLabel label);

std::optional<SceneLabel> parse_label(std::string_view name);

/// Probability distribution over the five scene classes.
using ProbVector = Eigen::Matrix<double, kClassCount, 1>;

/// Non-negative entries summing to one within `tol`.
bool is_valid_prob(const ProbVector& p, double tol = 1e-5);

/// Index of the largest entry; ties go to the lowest class code.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

inline ProbVector one_hot(SceneLabel label) {
    ProbVector p = ProbVector::Zero();
    p(label_code(label)) = 1.0;
    return p;
}

}  // namespace crowdscene
