#include "crowdscene/eval.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace crowdscene::eval {

EvalReport tally(std::span<const std::pair<SceneLabel, SceneLabel>> pairs) {
    EvalReport r;
    for (const auto& [truth, predicted] : pairs) {
        ++r.confusion(label_code(truth), label_code(predicted));
    }
    r.total = static_cast<long>(pairs.size());
    r.correct = r.confusion.trace();
    r.accuracy_pct = r.total > 0 ? 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
    for (int c = 0; c < kClassCount; ++c) {
        const long row = r.confusion.row(c).sum();
        r.per_class_accuracy(c) = row > 0 ? static_cast<double>(r.confusion(c, c)) / static_cast<double>(row)
                                          : std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

EvalReport evaluate(std::span<const fusion::SegmentPrediction> predictions,
                    const manifest::DatasetManifest& truth, manifest::Split split) {
    std::set<std::string> seen;
    std::vector<std::pair<SceneLabel, SceneLabel>> pairs;
    pairs.reserve(predictions.size());
    for (const auto& p : predictions) {
        const auto* rec = truth.find(p.segment_id);
        if (rec == nullptr || rec->split != split) {
            throw CoverageMismatch("prediction for segment '" + p.segment_id + "' is not in the " +
                                   std::string(manifest::split_name(split)) + " split");
        }
        if (!seen.insert(p.segment_id).second) {
            throw CoverageMismatch("duplicate prediction for segment '" + p.segment_id + "'");
        }
        pairs.emplace_back(*rec->label, p.label);
    }
    const std::size_t expected = truth.total(split);
    if (seen.size() != expected) {
        for (const auto* rec : truth.records_in(split)) {
            if (!seen.contains(rec->segment_id())) {
                throw CoverageMismatch("no prediction for segment '" + rec->segment_id() + "' (" +
                                       std::to_string(expected - seen.size()) + " missing)");
            }
        }
    }
    return tally(pairs);
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json j;
    j["accuracy_pct"] = report.accuracy_pct;
    j["M"] = report.correct;
    j["N"] = report.total;
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < kClassCount; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < kClassCount; ++c) row.push_back(report.confusion(r, c));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    nlohmann::json per = nlohmann::json::array();
    for (int c = 0; c < kClassCount; ++c) {
        const double v = report.per_class_accuracy(c);
        per.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    }
    j["per_class_accuracy"] = per;
    nlohmann::json names = nlohmann::json::array();
    for (SceneLabel l : kAllLabels) names.push_back(std::string(label_name(l)));
    j["classes"] = names;
    return j;
}

std::string render_text(const EvalReport& report) {
    std::ostringstream out;
    out << "Acc.% = " << std::fixed << std::setprecision(1) << report.accuracy_pct << "  (M = "
        << report.correct << ", N = " << report.total << ")\n\n";
    constexpr int kName = 18, kCell = 9;
    out << std::left << std::setw(kName) << "truth \\ pred";
    for (SceneLabel l : kAllLabels) {
        out << std::right << std::setw(kCell) << std::string(label_display_name(l)).substr(0, kCell - 1);
    }
    out << std::right << std::setw(kCell) << "acc%" << '\n';
    for (int r = 0; r < kClassCount; ++r) {
        out << std::left << std::setw(kName) << label_display_name(label_from_code(r));
        for (int c = 0; c < kClassCount; ++c) out << std::right << std::setw(kCell) << report.confusion(r, c);
        const double acc = report.per_class_accuracy(r);
        if (std::isnan(acc)) {
            out << std::right << std::setw(kCell) << "-";
        } else {
            out << std::right << std::setw(kCell) << std::setprecision(1) << 100.0 * acc;
        }
        out << '\n';
    }
    return out.str();
}

std::string render_bar_chart_svg(const std::string& title,
                                 std::span<const std::pair<std::string, double>> bars,
                                 double max_value) {
    constexpr int kLabelW = 170, kBarW = 360, kRowH = 28, kTop = 40, kPad = 12;
    const int height = kTop + static_cast<int>(bars.size()) * kRowH + kPad;
    const int width = kLabelW + kBarW + 80;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kPad << "\" y=\"24\" font-size=\"15\" font-weight=\"bold\">" << title << "</text>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double v = std::isfinite(bars[i].second) ? bars[i].second : 0.0;
        const double frac = max_value > 0.0 ? std::clamp(v / max_value, 0.0, 1.0) : 0.0;
        const int y = kTop + static_cast<int>(i) * kRowH;
        svg << "<text x=\"" << kPad << "\" y=\"" << y + 18 << "\">" << bars[i].first << "</text>\n";
        svg << "<rect x=\"" << kLabelW << "\" y=\"" << y + 4 << "\" width=\"" << std::lround(frac * kBarW)
            << "\" height=\"" << kRowH - 8 << "\" fill=\"#4878a8\"/>\n";
        char value[32];
        std::snprintf(value, sizeof value, "%.1f", v);
        svg << "<text x=\"" << kLabelW + std::lround(frac * kBarW) + 6 << "\" y=\"" << y + 18 << "\">"
            << value << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_report_svg(const EvalReport& report) {
    std::vector<std::pair<std::string, double>> bars;
    for (SceneLabel l : kAllLabels) {
        bars.emplace_back(std::string(label_display_name(l)), 100.0 * report.per_class_accuracy(label_code(l)));
    }
    char title[64];
    std::snprintf(title, sizeof title, "Per-class accuracy (overall %.1f%%)", report.accuracy_pct);
    return render_bar_chart_svg(title, bars, 100.0);
}

}  // namespace crowdscene::eval
