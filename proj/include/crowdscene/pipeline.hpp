#pragma once

#include "crowdscene/checkpoint.hpp"
#include "crowdscene/cstf.hpp"
#include "crowdscene/fusion.hpp"
#include "crowdscene/manifest.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace crowdscene::pipeline {

CROWDSCENE_DEFINE_ERROR(MissingFeatures);

/// On-disk feature cache: <root>/<frontend>/<segment_id>.cstf. Spectrograms are
/// stored as [frames, bins]; visual frames as [N, 3, 128, 128].
class FeatureStore {
public:
    explicit FeatureStore(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path(Frontend f, const std::string& segment_id) const;
    bool contains(Frontend f, const std::string& segment_id) const;
    void write(Frontend f, const std::string& segment_id, const cstf::Tensor& t) const;
    /// Throws MissingFeatures when absent.
    cstf::Tensor read(Frontend f, const std::string& segment_id) const;

private:
    std::filesystem::path root_;
};

using Progress = std::function<void(std::size_t done, std::size_t total)>;

/// Features of one segment as stored in the cache.
cstf::Tensor compute_features(Frontend f, const manifest::SegmentRecord& record, const dsp::DspConfig& cfg);

/// Spectrogram features of a PCM buffer as a [frames, bins] tensor.
cstf::Tensor spectrogram_tensor(dsp::SpectrogramKind kind, const PcmBuffer& pcm, const dsp::DspConfig& cfg);

struct ExtractSummary {
    std::size_t written = 0;
    std::size_t skipped = 0;
};

/// Computes and caches features for every record; existing files are kept unless `overwrite`.
ExtractSummary extract_features(const manifest::DatasetManifest& m, const FeatureStore& store, Frontend f,
                                const dsp::DspConfig& cfg, bool overwrite = false, const Progress& progress = {});

/// Model inputs from a cached tensor: standardized 128-frame tiles for spectrograms
/// (empty `stats` skips standardization), one patch per frame for visual tensors.
std::vector<dsp::Patch<float>> to_patches(Frontend f, const cstf::Tensor& t, const dsp::FeatureStats& stats,
                                          const std::string& segment_id);

struct TrainOptions {
    std::string framework;  // defaults to "<frontend>-vgg15"
    nn::TrainConfig train;
    augment::AugmentConfig augment;
    std::uint64_t init_seed = 0;
    dsp::DspConfig dsp;
};

/// Fits normalization on the Train split, trains VGG15 and packages a checkpoint.
/// Throws MissingFeatures if any Train segment lacks cached features.
Checkpoint train_model(const manifest::DatasetManifest& m, const FeatureStore& store, Frontend f,
                       const TrainOptions& options, const nn::EpochCallback& on_epoch = {});

/// Per-patch (or per-frame) probabilities averaged into one vector.
ProbVector predict_patches(const Checkpoint& ckpt, std::span<const dsp::Patch<float>> patches,
                           int batch_size = 16);

/// Segment predictions for every record of `split`, tagged with the framework name.
std::vector<fusion::SegmentPrediction> predict(const Checkpoint& ckpt, const manifest::DatasetManifest& m,
                                               const FeatureStore& store, manifest::Split split,
                                               const Progress& progress = {});

struct SegmentClassification {
    int segment_index = 0;
    double start_s = 0.0;
    fusion::SegmentPrediction fused;
    std::vector<fusion::SegmentPrediction> per_model;
};

/// Splits audio into consecutive 10 s segments (remainder dropped) and runs every
/// audio checkpoint on each, fusing the per-model segment vectors.
std::vector<SegmentClassification> classify_pcm(std::span<const Checkpoint> models, fusion::FusionScheme scheme,
                                                const PcmBuffer& pcm);

}  // namespace crowdscene::pipeline
