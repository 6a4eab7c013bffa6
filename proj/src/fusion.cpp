#include "crowdscene/fusion.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace crowdscene::fusion {

std::string_view scheme_name(FusionScheme scheme) {
    switch (scheme) {
        case FusionScheme::Mean: return "mean";
        case FusionScheme::Prod: return "prod";
        case FusionScheme::Max: return "max";
    }
    return "mean";
}

std::optional<FusionScheme> parse_scheme(std::string_view name) {
    if (name == "mean" || name == "MEAN") return FusionScheme::Mean;
    if (name == "prod" || name == "PROD") return FusionScheme::Prod;
    if (name == "max" || name == "MAX") return FusionScheme::Max;
    return std::nullopt;
}

ProbVector aggregate_segment(std::span<const ProbVector> patch_probs) {
    if (patch_probs.empty()) throw EmptyList("aggregate_segment: no patch probabilities");
    ProbVector sum = ProbVector::Zero();
    for (const auto& p : patch_probs) sum += p;
    return sum / static_cast<double>(patch_probs.size());
}

SceneLabel predict_label(const ProbVector& prob) { return label_from_code(argmax_lowest(prob)); }

SegmentPrediction make_prediction(std::string segment_id, const ProbVector& prob, std::string source) {
    SegmentPrediction p;
    p.segment_id = std::move(segment_id);
    p.prob = prob;
    p.label = predict_label(prob);
    p.source = std::move(source);
    p.valid_distribution = is_valid_prob(prob);
    return p;
}

std::vector<SegmentPrediction> fuse(const FusionInput& inputs, FusionScheme scheme) {
    const auto& fw = inputs.frameworks;
    if (fw.empty()) throw EmptyFrameworks("fuse: no frameworks supplied");
    const std::size_t s_count = fw.size();

    std::vector<std::unordered_map<std::string, const SegmentPrediction*>> index(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
        for (const auto& p : fw[s]) {
            if (!index[s].emplace(p.segment_id, &p).second) {
                throw SegmentSetMismatch("framework " + std::to_string(s) + " lists segment '" +
                                         p.segment_id + "' twice");
            }
        }
        if (fw[s].size() != fw[0].size()) {
            throw SegmentSetMismatch("frameworks cover different numbers of segments");
        }
    }

    std::string source = std::string(scheme_name(scheme)) + "(";
    for (std::size_t s = 0; s < s_count; ++s) {
        if (s > 0) source += "+";
        source += fw[s].empty() ? std::string("?") : fw[s].front().source;
    }
    source += ")";

    std::vector<SegmentPrediction> out;
    out.reserve(fw[0].size());
    for (const auto& first : fw[0]) {
        std::vector<const ProbVector*> probs;
        probs.reserve(s_count);
        for (std::size_t s = 0; s < s_count; ++s) {
            auto it = index[s].find(first.segment_id);
            if (it == index[s].end()) {
                throw SegmentSetMismatch("segment '" + first.segment_id + "' missing from framework " +
                                         std::to_string(s));
            }
            probs.push_back(&it->second->prob);
        }
        ProbVector fused;
        switch (scheme) {
            case FusionScheme::Mean: {
                fused.setZero();
                for (const auto* p : probs) fused += *p;
                fused /= static_cast<double>(s_count);
                break;
            }
            case FusionScheme::Prod: {
                for (int c = 0; c < kClassCount; ++c) {
                    double log_sum = 0.0;
                    for (const auto* p : probs) {
                        log_sum += (*p)(c) > 0.0 ? std::log((*p)(c))
                                                 : -std::numeric_limits<double>::infinity();
                    }
                    fused(c) = std::exp(log_sum) / static_cast<double>(s_count);
                }
                break;
            }
            case FusionScheme::Max: {
                fused = *probs[0];
                for (const auto* p : probs) fused = fused.cwiseMax(*p);
                break;
            }
        }
        out.push_back(make_prediction(first.segment_id, fused, source));
    }
    return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            f.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    f.push_back(cur);
    return f;
}

}  // namespace

FusionInput parse_probability_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    FusionInput result;
    std::map<std::string, std::size_t> slot;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kProbCsvHeader) throw CsvError("probability CSV: unexpected header");
            header = true;
            continue;
        }
        const auto f = split_fields(line);
        if (f.size() != 2 + kClassCount) {
            throw CsvError("probability CSV line " + std::to_string(line_no) + ": expected 7 fields");
        }
        ProbVector p;
        for (int c = 0; c < kClassCount; ++c) {
            std::istringstream ss(f[2 + c]);
            double v = 0.0;
            ss >> v;
            if (!ss || !ss.eof() || !std::isfinite(v) || v < 0.0) {
                throw CsvError("probability CSV line " + std::to_string(line_no) + ": bad value '" +
                               f[2 + c] + "'");
            }
            p(c) = v;
        }
        auto [it, inserted] = slot.emplace(f[1], result.frameworks.size());
        if (inserted) result.frameworks.emplace_back();
        result.frameworks[it->second].push_back(make_prediction(f[0], p, f[1]));
    }
    if (!header) throw CsvError("probability CSV: missing header");
    return result;
}

FusionInput read_probability_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_probability_csv(in);
}

void write_probability_csv(std::ostream& out, std::span<const SegmentPrediction> predictions) {
    out << kProbCsvHeader << '\n';
    out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : predictions) {
        out << p.segment_id << ',' << p.source;
        for (int c = 0; c < kClassCount; ++c) out << ',' << p.prob(c);
        out << '\n';
    }
}

void write_probability_csv(const std::filesystem::path& path,
                           std::span<const SegmentPrediction> predictions) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_probability_csv(out, predictions);
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace crowdscene::fusion
