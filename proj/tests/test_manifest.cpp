#include "crowdscene/manifest.hpp"

#include <doctest.h>

#include "support.hpp"

#include <fstream>
#include <sstream>

using namespace crowdscene;
using namespace crowdscene::manifest;

namespace {

// Table 1 of the reference dataset: per-class Train / Test segment counts.
constexpr std::array<std::array<std::size_t, 2>, kClassCount> kTable1 = {{
    {1429, 757}, {1430, 652}, {1406, 615}, {1367, 727}, {1365, 712}}};

/// Manifest CSV with the given per-class counts; every video holds 3 segments
/// and lives in one split only.
std::string table_csv(const std::array<std::array<std::size_t, 2>, kClassCount>& counts) {
    std::ostringstream csv;
    csv << kCsvHeader << '\n';
    for (int c = 0; c < kClassCount; ++c) {
        for (int s = 0; s < 2; ++s) {
            for (std::size_t k = 0; k < counts[c][s]; ++k) {
                const std::string vid = "v" + std::to_string(c) + "_" + std::to_string(s) + "_" + std::to_string(k / 3);
                csv << vid << ',' << k % 3 << ',' << (k % 3) * 10 << ',' << label_name(label_from_code(c)) << ','
                    << split_name(static_cast<Split>(s)) << ",audio/" << vid << "_" << k % 3 << ".wav,\n";
            }
        }
    }
    return csv.str();
}

}  // namespace

TEST_CASE("Table 1 manifest loads with matching tallies") {
    std::istringstream in(table_csv(kTable1));
    const DatasetManifest m = parse_manifest(in);
    CHECK(m.total(Split::Train) == 6997);
    CHECK(m.total(Split::Test) == 3463);
    CHECK(m.records().size() == 10460);
    CHECK(m.count(SceneLabel::Riot, Split::Train) == 1429);
    CHECK(m.count(SceneLabel::Riot, Split::Test) == 757);
    CHECK(m.counts() == recount(m.records()));
    for (int c = 0; c < kClassCount; ++c) {
        CHECK(m.counts()[c][0] == kTable1[c][0]);
        CHECK(m.counts()[c][1] == kTable1[c][1]);
    }
}

TEST_CASE("Table 1 split ratios fall within the default tolerance") {
    std::istringstream in(table_csv(kTable1));
    const SplitReport r = validate_split(parse_manifest(in));
    CHECK(r.passed);
    const auto& riot = r.classes[label_code(SceneLabel::Riot)];
    CHECK(riot.train_pct == doctest::Approx(100.0 * 1429 / 2186));
    CHECK(riot.train_pct == doctest::Approx(65.37).epsilon(1e-3));
    CHECK_FALSE(riot.flagged);
}

TEST_CASE("validate_split flags a class held entirely in Train") {
    auto counts = kTable1;
    counts[2] = {100, 0};
    std::istringstream in(table_csv(counts));
    const SplitReport r = validate_split(parse_manifest(in));
    CHECK_FALSE(r.passed);
    CHECK(r.classes[2].flagged);
    CHECK(r.classes[2].deviation_pp == doctest::Approx(33.0));
}

TEST_CASE("exact 67:33 passes with zero deviation") {
    std::array<std::array<std::size_t, 2>, kClassCount> counts{};
    for (auto& c : counts) c = {67, 33};
    std::istringstream in(table_csv(counts));
    const SplitReport r = validate_split(parse_manifest(in));
    CHECK(r.passed);
    for (const auto& c : r.classes) CHECK(c.deviation_pp == doctest::Approx(0.0));
}

TEST_CASE("a video in both splits is a SplitViolation") {
    std::istringstream in(std::string(kCsvHeader) +
                          "\nv1,0,0,riot,train,a.wav,\nv1,1,10,riot,test,b.wav,\n");
    CHECK_THROWS_AS(parse_manifest(in), SplitViolation);
}

TEST_CASE("empty and malformed manifests are rejected") {
    std::istringstream header_only(std::string(kCsvHeader) + "\n");
    CHECK_THROWS_AS(parse_manifest(header_only), EmptyManifest);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_manifest(empty), EmptyManifest);
    std::istringstream bad_label(std::string(kCsvHeader) + "\nv1,0,0,protest,train,a.wav,\n");
    CHECK_THROWS_AS(parse_manifest(bad_label), ParseError);
    std::istringstream short_row(std::string(kCsvHeader) + "\nv1,0,0,riot,train\n");
    CHECK_THROWS_AS(parse_manifest(short_row), ParseError);
    std::istringstream dup(std::string(kCsvHeader) + "\nv1,0,0,riot,train,a.wav,\nv1,0,0,riot,train,b.wav,\n");
    CHECK_THROWS_AS(parse_manifest(dup), ParseError);
}

TEST_CASE("write_manifest and load_manifest round-trip with relative paths") {
    testsupport::TempDir dir("manifest");
    std::istringstream in(table_csv({{{4, 2}, {3, 3}, {1, 1}, {2, 0}, {0, 2}}}));
    const DatasetManifest m = parse_manifest(in, dir.path());
    write_manifest(dir / "m.csv", m);
    std::ifstream raw(dir / "m.csv");
    std::string header, first;
    std::getline(raw, header);
    std::getline(raw, first);
    CHECK(header == kCsvHeader);
    CHECK(first.find(dir.path().string()) == std::string::npos);
    const DatasetManifest back = load_manifest(dir / "m.csv");
    REQUIRE(back.records().size() == m.records().size());
    CHECK(back.counts() == m.counts());
    CHECK(back.records()[0].audio_path == m.records()[0].audio_path);
    CHECK(back.find(m.records()[3].segment_id()) != nullptr);
}

TEST_CASE("segment ids join video and index") {
    SegmentRecord r;
    r.video_id = "abc";
    r.segment_index = 4;
    CHECK(r.segment_id() == "abc#4");
}

TEST_CASE("expand_template substitutes every placeholder occurrence") {
    CHECK(expand_template("x {a} {b} {a} {c}", {{"a", "1"}, {"b", "two"}}) == "x 1 two 1 {c}");
}

#ifdef WAV_SLICE_BIN
namespace {

std::vector<SegmentRecord> ingest_seconds(const testsupport::TempDir& dir, double seconds) {
    const auto video = dir / ("clip_" + std::to_string(static_cast<int>(seconds * 10)) + ".wav");
    write_wav(video, testsupport::tone(300.0, seconds, 8000));
    IngestOptions opt;
    opt.decoder_cmd_template = std::string(WAV_SLICE_BIN) + " {input} {output} {start} {duration}";
    return ingest_media(video, dir / "out", opt);
}

}  // namespace

TEST_CASE("ingest cuts floor(n / 10) segments") {
    testsupport::TempDir dir("ingest");
    const auto segs = ingest_seconds(dir, 29.0);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].segment_index == 0);
    CHECK(segs[1].start_s == doctest::Approx(10.0));
    CHECK_FALSE(segs[0].label.has_value());
    const PcmBuffer pcm = read_wav(segs[1].audio_path);
    CHECK(pcm.samples.size() == 80000);

    CHECK(ingest_seconds(dir, 10.0).size() == 1);
    CHECK(ingest_seconds(dir, 9.0).empty());
}

TEST_CASE("ingest reports decoder failure on an unreadable input") {
    testsupport::TempDir dir("ingest_fail");
    std::ofstream(dir / "broken.mp4") << "not media";
    IngestOptions opt;
    opt.decoder_cmd_template = std::string(WAV_SLICE_BIN) + " {input} {output} {start} {duration} 2>/dev/null";
    CHECK_THROWS_AS(ingest_media(dir / "broken.mp4", dir / "out", opt), DecoderFailure);
}
#endif
