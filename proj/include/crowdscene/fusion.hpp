#pragma once

#include "crowdscene/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace crowdscene::fusion {

CROWDSCENE_DEFINE_ERROR(EmptyList);
CROWDSCENE_DEFINE_ERROR(SegmentSetMismatch);
CROWDSCENE_DEFINE_ERROR(EmptyFrameworks);
CROWDSCENE_DEFINE_ERROR(CsvError);

enum class FusionScheme { Mean, Prod, Max };

std::string_view scheme_name(FusionScheme scheme);
std::optional<FusionScheme> parse_scheme(std::string_view name);

struct SegmentPrediction {
    std::string segment_id;
    ProbVector prob = ProbVector::Zero();
    SceneLabel label = SceneLabel::Riot;
    std::string source;
    /// False when `prob` is a PROD/MAX score vector that need not sum to one.
    bool valid_distribution = true;
};

/// Per-framework prediction lists; every list must cover the same segment ids.
struct FusionInput {
    std::vector<std::vector<SegmentPrediction>> frameworks;
};

/// Componentwise mean of patch or frame probabilities.
ProbVector aggregate_segment(std::span<const ProbVector> patch_probs);

/// Argmax with ties resolved towards the lowest class code.
SceneLabel predict_label(const ProbVector& prob);

SegmentPrediction make_prediction(std::string segment_id, const ProbVector& prob, std::string source);

/// MEAN: (1/S) sum_s p_s.  PROD: (1/S) prod_s p_s (evaluated in log space).
/// MAX: max_s p_s.  Output follows the segment order of the first framework;
/// PROD and MAX vectors are kept unnormalized.
std::vector<SegmentPrediction> fuse(const FusionInput& inputs, FusionScheme scheme);

/// Column order of the probability CSV.
inline constexpr const char* kProbCsvHeader =
    "segment_id,framework,p_riot,p_noise_street,p_firework_event,p_music_event,p_sport_atmosphere";

/// Predictions grouped by framework, in order of first appearance.
FusionInput parse_probability_csv(std::istream& in);
FusionInput read_probability_csv(const std::filesystem::path& path);

void write_probability_csv(std::ostream& out, std::span<const SegmentPrediction> predictions);
void write_probability_csv(const std::filesystem::path& path,
                           std::span<const SegmentPrediction> predictions);

}  // namespace crowdscene::fusion
