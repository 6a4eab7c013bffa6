#pragma once

#include "crowdscene/fusion.hpp"
#include "crowdscene/manifest.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>

namespace crowdscene::eval {

CROWDSCENE_DEFINE_ERROR(CoverageMismatch);

using ConfusionMatrix = Eigen::Matrix<long, kClassCount, kClassCount>;

struct EvalReport {
    long correct = 0;  // M
    long total = 0;    // N
    double accuracy_pct = 0.0;
    /// Rows are ground truth, columns are predictions.
    ConfusionMatrix confusion = ConfusionMatrix::Zero();
    /// Diagonal over row sum; NaN for classes absent from the truth.
    Eigen::Matrix<double, kClassCount, 1> per_class_accuracy =
        Eigen::Matrix<double, kClassCount, 1>::Zero();
};

/// Builds the report from (truth, predicted) pairs.
EvalReport tally(std::span<const std::pair<SceneLabel, SceneLabel>> pairs);

/// Predictions must cover exactly the segments of `split`; anything missing,
/// extra or duplicated raises CoverageMismatch.
EvalReport evaluate(std::span<const fusion::SegmentPrediction> predictions,
                    const manifest::DatasetManifest& truth, manifest::Split split);

nlohmann::json to_json(const EvalReport& report);

/// Accuracy to one decimal place and a 5 x 5 confusion table with class names.
std::string render_text(const EvalReport& report);

/// Horizontal bar chart (SVG) with one bar per entry.
std::string render_bar_chart_svg(const std::string& title,
                                 std::span<const std::pair<std::string, double>> bars,
                                 double max_value);

/// Per-class accuracy bars for a report.
std::string render_report_svg(const EvalReport& report);

}  // namespace crowdscene::eval
