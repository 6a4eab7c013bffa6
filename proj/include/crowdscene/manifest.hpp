#pragma once

#include "crowdscene/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crowdscene::manifest {

CROWDSCENE_DEFINE_ERROR(ParseError);
CROWDSCENE_DEFINE_ERROR(SplitViolation);
CROWDSCENE_DEFINE_ERROR(EmptyManifest);
CROWDSCENE_DEFINE_ERROR(DecoderFailure);

enum class Split : int { Train = 0, Test = 1 };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view name);

inline constexpr double kSegmentSeconds = 10.0;

inline constexpr const char* kCsvHeader =
    "video_id,segment_index,start_s,label,split,audio_path,frames_dir";

/// One 10-second unit of a video. Label and split are unset for freshly
/// ingested media until the caller assigns them.
struct SegmentRecord {
    std::string video_id;
    int segment_index = 0;
    double start_s = 0.0;
    double duration_s = kSegmentSeconds;
    std::optional<SceneLabel> label;
    std::optional<Split> split;
    std::filesystem::path audio_path;
    std::filesystem::path frames_dir;

    /// Stable identifier used in probability CSVs: "<video_id>#<segment_index>".
    std::string segment_id() const;
};

/// counts[label][split]
using Tally = std::array<std::array<std::size_t, 2>, kClassCount>;

class DatasetManifest {
public:
    DatasetManifest() = default;

    /// Validates and tallies. Throws SplitViolation, ParseError (duplicate
    /// segment, missing label/split) or EmptyManifest.
    explicit DatasetManifest(std::vector<SegmentRecord> records);

    const std::vector<SegmentRecord>& records() const { return records_; }
    const Tally& counts() const { return counts_; }
    std::size_t count(SceneLabel label, Split split) const {
        return counts_[label_code(label)][static_cast<int>(split)];
    }
    std::size_t total(Split split) const;

    std::vector<const SegmentRecord*> records_in(Split split) const;

    /// nullptr when absent.
    const SegmentRecord* find(const std::string& segment_id) const;

private:
    std::vector<SegmentRecord> records_;
    Tally counts_{};
    std::map<std::string, std::size_t> by_id_;
};

Tally recount(const std::vector<SegmentRecord>& records);

/// Relative audio/frames paths are resolved against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});

/// Paths are written relative to `base_dir` when they live beneath it.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct ClassSplitRatio {
    SceneLabel label;
    std::size_t train = 0;
    std::size_t test = 0;
    double train_pct = 0.0;
    double deviation_pp = 0.0;
    bool flagged = false;
};

struct SplitReport {
    double target_train_pct = 67.0;
    double tolerance_pp = 10.0;
    std::array<ClassSplitRatio, kClassCount> classes{};
    bool passed = true;
};

SplitReport validate_split(const DatasetManifest& manifest, double tolerance_pp = 10.0,
                           double target_train_pct = 67.0);

struct IngestOptions {
    /// Placeholders: {input} {output} {start} {duration}. Must write a WAV to {output}.
    std::string decoder_cmd_template;
    /// Optional. Placeholders: {input} {output} {start} {duration}; {output} is a directory.
    std::string frames_cmd_template;
    std::string video_id;
};

/// Cuts a video into consecutive 10-second segments by repeatedly invoking the
/// external decoder. Trailing partial segments are dropped; a video shorter
/// than one segment yields an empty list and a warning on stderr.
std::vector<SegmentRecord> ingest_media(const std::filesystem::path& video_path,
                                        const std::filesystem::path& out_dir,
                                        const IngestOptions& options);

/// Substitutes {name} placeholders; unknown placeholders are left as-is.
std::string expand_template(std::string tmpl, const std::map<std::string, std::string>& values);

}  // namespace crowdscene::manifest
