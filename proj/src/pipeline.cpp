#include "crowdscene/pipeline.hpp"

#include "crowdscene/image.hpp"

#include <algorithm>

namespace crowdscene::pipeline {

namespace fs = std::filesystem;

fs::path FeatureStore::path(Frontend f, const std::string& segment_id) const {
    std::string file = segment_id;
    std::replace_if(file.begin(), file.end(), [](char c) { return c == '/' || c == '\\'; }, '_');
    return root_ / std::string(frontend_name(f)) / (file + ".cstf");
}

bool FeatureStore::contains(Frontend f, const std::string& segment_id) const {
    return fs::is_regular_file(path(f, segment_id));
}

void FeatureStore::write(Frontend f, const std::string& segment_id, const cstf::Tensor& t) const {
    const fs::path p = path(f, segment_id);
    fs::create_directories(p.parent_path());
    cstf::write(p, t);
}

cstf::Tensor FeatureStore::read(Frontend f, const std::string& segment_id) const {
    const fs::path p = path(f, segment_id);
    if (!fs::is_regular_file(p)) {
        throw MissingFeatures("no " + std::string(frontend_name(f)) + " features for segment '" + segment_id +
                              "' (expected " + p.string() + ")");
    }
    return cstf::read(p);
}

cstf::Tensor spectrogram_tensor(dsp::SpectrogramKind kind, const PcmBuffer& pcm, const dsp::DspConfig& cfg) {
    return cstf::from_matrix(dsp::extract_features(kind, pcm, cfg).values);
}

cstf::Tensor compute_features(Frontend f, const manifest::SegmentRecord& record, const dsp::DspConfig& cfg) {
    if (const auto kind = spectrogram_kind(f)) {
        if (record.audio_path.empty()) throw Error("segment '" + record.segment_id() + "' has no audio path");
        return spectrogram_tensor(*kind, read_wav(record.audio_path), cfg);
    }
    if (record.frames_dir.empty()) throw Error("segment '" + record.segment_id() + "' has no frames directory");
    const auto frames = image::list_frames(record.frames_dir);
    if (frames.empty()) throw Error("no frame images in " + record.frames_dir.string());
    cstf::Tensor t;
    t.dims = {static_cast<std::uint32_t>(frames.size()), 3, dsp::kPatchSize, dsp::kPatchSize};
    t.data.reserve(t.element_count());
    for (const auto& frame : frames) {
        const auto patch = image::to_patch(image::read_image(frame));
        t.data.insert(t.data.end(), patch.values.data(), patch.values.data() + patch.values.size());
    }
    return t;
}

ExtractSummary extract_features(const manifest::DatasetManifest& m, const FeatureStore& store, Frontend f,
                                const dsp::DspConfig& cfg, bool overwrite, const Progress& progress) {
    ExtractSummary summary;
    const auto& records = m.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string id = records[i].segment_id();
        if (!overwrite && store.contains(f, id)) {
            ++summary.skipped;
        } else {
            store.write(f, id, compute_features(f, records[i], cfg));
            ++summary.written;
        }
        if (progress) progress(i + 1, records.size());
    }
    return summary;
}

std::vector<dsp::Patch<float>> to_patches(Frontend f, const cstf::Tensor& t, const dsp::FeatureStats& stats,
                                          const std::string& segment_id) {
    if (f == Frontend::Visual) {
        if (t.dims.size() != 4 || t.dims[1] != 3 || t.dims[2] != dsp::kPatchSize || t.dims[3] != dsp::kPatchSize) {
            throw ShapeMismatch("visual features for '" + segment_id + "' must be [N, 3, 128, 128]");
        }
        std::vector<dsp::Patch<float>> out;
        constexpr std::size_t kPlane = 3 * dsp::kPatchSize * dsp::kPatchSize;
        for (std::uint32_t n = 0; n < t.dims[0]; ++n) {
            auto p = dsp::Patch<float>::zeros(3);
            std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(n * kPlane), kPlane, p.values.data());
            p.segment_id = segment_id;
            p.index = static_cast<int>(n);
            out.push_back(std::move(p));
        }
        return out;
    }
    if (t.dims.size() != 2) throw ShapeMismatch("spectrogram features for '" + segment_id + "' must be rank 2");
    dsp::Spectrogram<float> spec;
    spec.kind = *spectrogram_kind(f);
    spec.values = cstf::to_matrix(t);
    if (!stats.empty()) stats.apply(spec.values);
    return dsp::patchify(spec, segment_id);
}

Checkpoint train_model(const manifest::DatasetManifest& m, const FeatureStore& store, Frontend f,
                       const TrainOptions& options, const nn::EpochCallback& on_epoch) {
    const auto records = m.records_in(manifest::Split::Train);
    if (records.empty()) throw Error("manifest has no Train segments");
    std::size_t missing = 0;
    std::string first_missing;
    for (const auto* r : records) {
        if (!store.contains(f, r->segment_id())) {
            if (missing++ == 0) first_missing = r->segment_id();
        }
    }
    if (missing > 0) {
        throw MissingFeatures(std::to_string(missing) + " Train segment(s) lack " + std::string(frontend_name(f)) +
                              " features in " + store.root().string() + ", first '" + first_missing + "'");
    }

    Checkpoint ckpt;
    ckpt.frontend = f;
    ckpt.framework = options.framework.empty() ? std::string(frontend_name(f)) + "-vgg15" : options.framework;
    ckpt.dsp = options.dsp;
    ckpt.train = options.train;
    ckpt.augment = options.augment;
    ckpt.init_seed = options.init_seed;

    std::vector<cstf::Tensor> tensors;
    tensors.reserve(records.size());
    for (const auto* r : records) tensors.push_back(store.read(f, r->segment_id()));
    if (f != Frontend::Visual) {
        std::vector<dsp::RowMatrix<float>> mats;
        mats.reserve(tensors.size());
        for (const auto& t : tensors) mats.push_back(cstf::to_matrix(t));
        std::vector<const dsp::RowMatrix<float>*> ptrs;
        for (const auto& mat : mats) ptrs.push_back(&mat);
        ckpt.stats = dsp::FeatureStats::fit(ptrs);
    }

    std::vector<nn::TrainSegment> data;
    data.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        nn::TrainSegment seg;
        seg.patches = to_patches(f, tensors[i], ckpt.stats, records[i]->segment_id());
        seg.label = *records[i]->label;
        if (!seg.patches.empty()) data.push_back(std::move(seg));
    }
    tensors.clear();

    auto result = nn::fit(nn::build_vgg15<float>(frontend_channels(f), kClassCount, options.init_seed), data,
                          options.train, options.augment, on_epoch);
    ckpt.net = std::move(result.params);
    ckpt.epoch = result.history.best_epoch;
    ckpt.loss = result.history.best_loss;
    ckpt.history = std::move(result.history.epochs);
    return ckpt;
}

ProbVector predict_patches(const Checkpoint& ckpt, std::span<const dsp::Patch<float>> patches, int batch_size) {
    if (patches.empty()) throw fusion::EmptyList("no patches to classify");
    std::vector<ProbVector> probs;
    probs.reserve(patches.size());
    const auto step = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < patches.size(); start += step) {
        const auto chunk = patches.subspan(start, std::min(step, patches.size() - start));
        const auto out = nn::forward<float>(ckpt.net, chunk, nn::Mode::Infer);
        probs.insert(probs.end(), out.begin(), out.end());
    }
    return fusion::aggregate_segment(probs);
}

std::vector<fusion::SegmentPrediction> predict(const Checkpoint& ckpt, const manifest::DatasetManifest& m,
                                               const FeatureStore& store, manifest::Split split,
                                               const Progress& progress) {
    const auto records = m.records_in(split);
    std::vector<fusion::SegmentPrediction> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string id = records[i]->segment_id();
        const auto patches = to_patches(ckpt.frontend, store.read(ckpt.frontend, id), ckpt.stats, id);
        out.push_back(fusion::make_prediction(id, predict_patches(ckpt, patches), ckpt.framework));
        if (progress) progress(i + 1, records.size());
    }
    return out;
}

std::vector<SegmentClassification> classify_pcm(std::span<const Checkpoint> models, fusion::FusionScheme scheme,
                                                const PcmBuffer& pcm) {
    if (models.empty()) throw fusion::EmptyFrameworks("no models loaded");
    for (const auto& m : models) {
        if (m.frontend == Frontend::Visual) throw Error("model '" + m.framework + "' needs video frames, not audio");
    }
    if (pcm.sample_rate <= 0) throw dsp::EmptyInput("audio has no sample rate");
    const auto seg_len = static_cast<std::size_t>(manifest::kSegmentSeconds * pcm.sample_rate);
    const std::size_t count = pcm.samples.size() / seg_len;
    if (count == 0) {
        throw dsp::TooShort("audio lasts " + std::to_string(pcm.duration_s()) + " s, shorter than one 10 s segment");
    }

    std::vector<SegmentClassification> out;
    for (std::size_t k = 0; k < count; ++k) {
        PcmBuffer segment;
        segment.sample_rate = pcm.sample_rate;
        const auto begin = pcm.samples.begin() + static_cast<std::ptrdiff_t>(k * seg_len);
        segment.samples.assign(begin, begin + static_cast<std::ptrdiff_t>(seg_len));
        const std::string id = "segment#" + std::to_string(k);

        SegmentClassification sc;
        sc.segment_index = static_cast<int>(k);
        sc.start_s = static_cast<double>(k) * manifest::kSegmentSeconds;
        fusion::FusionInput input;
        for (const auto& model : models) {
            const auto t = spectrogram_tensor(*spectrogram_kind(model.frontend), segment, model.dsp);
            const auto patches = to_patches(model.frontend, t, model.stats, id);
            auto pred = fusion::make_prediction(id, predict_patches(model, patches), model.framework);
            input.frameworks.push_back({pred});
            sc.per_model.push_back(std::move(pred));
        }
        sc.fused = fusion::fuse(input, scheme).front();
        out.push_back(std::move(sc));
    }
    return out;
}

}  // namespace crowdscene::pipeline
