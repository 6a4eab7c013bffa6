#include "crowdscene/manifest.hpp"

#include "crowdscene/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace crowdscene::manifest {

namespace fs = std::filesystem;

std::string_view split_name(Split split) { return split == Split::Train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    return std::nullopt;
}

std::string SegmentRecord::segment_id() const {
    return video_id + "#" + std::to_string(segment_index);
}

Tally recount(const std::vector<SegmentRecord>& records) {
    Tally t{};
    for (const auto& r : records) {
        if (r.label && r.split) ++t[label_code(*r.label)][static_cast<int>(*r.split)];
    }
    return t;
}

DatasetManifest::DatasetManifest(std::vector<SegmentRecord> records)
    : records_(std::move(records)) {
    if (records_.empty()) throw EmptyManifest("manifest has no records");

    std::map<std::string, Split> video_split;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.video_id.empty()) throw ParseError("record " + std::to_string(i) + ": empty video_id");
        if (r.segment_index < 0) {
            throw ParseError("record " + r.video_id + ": negative segment_index");
        }
        if (!r.label || !r.split) {
            throw ParseError("record " + r.segment_id() + ": label and split must be assigned");
        }
        if (r.duration_s != kSegmentSeconds) {
            throw ParseError("record " + r.segment_id() + ": duration must be 10 s");
        }
        auto [it, inserted] = video_split.emplace(r.video_id, *r.split);
        if (!inserted && it->second != *r.split) {
            throw SplitViolation("video '" + r.video_id + "' appears in both train and test");
        }
        if (!by_id_.emplace(r.segment_id(), i).second) {
            throw ParseError("duplicate segment " + r.segment_id());
        }
    }
    counts_ = recount(records_);
}

std::size_t DatasetManifest::total(Split split) const {
    std::size_t n = 0;
    for (const auto& row : counts_) n += row[static_cast<int>(split)];
    return n;
}

std::vector<const SegmentRecord*> DatasetManifest::records_in(Split split) const {
    std::vector<const SegmentRecord*> out;
    for (const auto& r : records_) {
        if (r.split == split) out.push_back(&r);
    }
    return out;
}

const SegmentRecord* DatasetManifest::find(const std::string& segment_id) const {
    auto it = by_id_.find(segment_id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no, const char* what) {
    std::istringstream ss(text);
    T value{};
    ss >> value;
    if (!ss || !ss.eof()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
    }
    return value;
}

fs::path resolve(const fs::path& base, const std::string& text) {
    if (text.empty()) return {};
    fs::path p(text);
    if (p.is_absolute() || base.empty()) return p;
    return base / p;
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in, const fs::path& base_dir) {
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::vector<SegmentRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kCsvHeader) {
                throw ParseError("line 1: expected header '" + std::string(kCsvHeader) + "'");
            }
            saw_header = true;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 7) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                             std::to_string(f.size()));
        }
        SegmentRecord r;
        r.video_id = f[0];
        r.segment_index = parse_number<int>(f[1], line_no, "segment_index");
        r.start_s = parse_number<double>(f[2], line_no, "start_s");
        r.label = parse_label(f[3]);
        if (!r.label) throw ParseError("line " + std::to_string(line_no) + ": unknown label '" + f[3] + "'");
        r.split = parse_split(f[4]);
        if (!r.split) throw ParseError("line " + std::to_string(line_no) + ": unknown split '" + f[4] + "'");
        if (f[5].empty()) throw ParseError("line " + std::to_string(line_no) + ": empty audio_path");
        r.audio_path = resolve(base_dir, f[5]);
        r.frames_dir = resolve(base_dir, f[6]);
        records.push_back(std::move(r));
    }
    if (records.empty()) throw EmptyManifest("manifest has no records");
    return DatasetManifest(std::move(records));
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto rel = [&](const fs::path& p) -> std::string {
        if (p.empty()) return {};
        std::error_code ec;
        const fs::path r = fs::relative(p, base, ec);
        if (!ec && !r.empty() && *r.begin() != "..") return r.generic_string();
        return p.generic_string();
    };
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << kCsvHeader << '\n';
    for (const auto& r : manifest.records()) {
        std::ostringstream start;
        start << r.start_s;
        out << r.video_id << ',' << r.segment_index << ',' << start.str() << ','
            << label_name(*r.label) << ',' << split_name(*r.split) << ',' << rel(r.audio_path)
            << ',' << rel(r.frames_dir) << '\n';
    }
    if (!out) throw IoError("short write to " + path.string());
}

SplitReport validate_split(const DatasetManifest& manifest, double tolerance_pp,
                           double target_train_pct) {
    SplitReport report;
    report.target_train_pct = target_train_pct;
    report.tolerance_pp = tolerance_pp;
    for (SceneLabel label : kAllLabels) {
        auto& c = report.classes[label_code(label)];
        c.label = label;
        c.train = manifest.count(label, Split::Train);
        c.test = manifest.count(label, Split::Test);
        const std::size_t n = c.train + c.test;
        if (n == 0) continue;  // absent class: nothing to judge
        c.train_pct = 100.0 * static_cast<double>(c.train) / static_cast<double>(n);
        c.deviation_pp = c.train_pct - target_train_pct;
        c.flagged = std::abs(c.deviation_pp) > tolerance_pp;
        if (c.flagged) report.passed = false;
    }
    return report;
}

std::string expand_template(std::string tmpl, const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        const std::string token = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = tmpl.find(token, pos)) != std::string::npos) {
            tmpl.replace(pos, token.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'') {
            out += "'\\''";
        } else {
            out.push_back(ch);
        }
    }
    out.push_back('\'');
    return out;
}

std::string format_seconds(double s) {
    std::ostringstream ss;
    ss << s;
    return ss.str();
}

constexpr int kMaxSegments = 100000;

}  // namespace

std::vector<SegmentRecord> ingest_media(const fs::path& video_path, const fs::path& out_dir,
                                        const IngestOptions& options) {
    if (options.decoder_cmd_template.empty()) throw DecoderFailure("empty decoder command template");
    fs::create_directories(out_dir);
    const std::string video_id =
        options.video_id.empty() ? video_path.stem().string() : options.video_id;

    std::vector<SegmentRecord> segments;
    for (int index = 0; index < kMaxSegments; ++index) {
        const double start = index * kSegmentSeconds;
        const fs::path wav = out_dir / (video_id + "_" + std::to_string(index) + ".wav");
        fs::remove(wav);
        const std::map<std::string, std::string> values = {
            {"input", shell_quote(video_path.string())},
            {"output", shell_quote(wav.string())},
            {"start", format_seconds(start)},
            {"duration", format_seconds(kSegmentSeconds)},
        };
        const int rc = std::system(expand_template(options.decoder_cmd_template, values).c_str());
        if (rc != 0) {
            throw DecoderFailure("decoder exited with status " + std::to_string(rc) + " for " +
                                 video_path.string() + " at " + format_seconds(start) + " s");
        }
        if (!fs::exists(wav) || fs::file_size(wav) == 0) break;

        PcmBuffer pcm = read_wav(wav);
        const auto needed =
            static_cast<std::size_t>(std::llround(kSegmentSeconds * pcm.sample_rate));
        if (pcm.samples.size() < needed) {
            fs::remove(wav);
            break;
        }
        pcm.samples.resize(needed);
        write_wav(wav, pcm);

        SegmentRecord rec;
        rec.video_id = video_id;
        rec.segment_index = index;
        rec.start_s = start;
        rec.audio_path = wav;
        if (!options.frames_cmd_template.empty()) {
            const fs::path frames = out_dir / (video_id + "_" + std::to_string(index) + "_frames");
            fs::create_directories(frames);
            auto fvalues = values;
            fvalues["output"] = shell_quote(frames.string());
            const int frc =
                std::system(expand_template(options.frames_cmd_template, fvalues).c_str());
            if (frc != 0) {
                throw DecoderFailure("frame extractor exited with status " + std::to_string(frc));
            }
            rec.frames_dir = frames;
        }
        segments.push_back(std::move(rec));
    }
    if (segments.empty()) {
        std::cerr << "warning: " << video_path.string()
                  << " is shorter than one 10-second segment; no segments produced\n";
    }
    return segments;
}

}  // namespace crowdscene::manifest
