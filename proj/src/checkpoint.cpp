#include "crowdscene/checkpoint.hpp"

#include "crowdscene/audio.hpp"
#include "crowdscene/cstf.hpp"

#include <fstream>

namespace crowdscene::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "crowdscene-checkpoint";
constexpr int kFormatVersion = 1;

std::string_view pool_name(nn::Pool p) {
    switch (p) {
        case nn::Pool::None: return "none";
        case nn::Pool::Avg2: return "avg2";
        case nn::Pool::Global: return "global";
    }
    return "none";
}

nn::Pool parse_pool(const std::string& s) {
    if (s == "none") return nn::Pool::None;
    if (s == "avg2") return nn::Pool::Avg2;
    if (s == "global") return nn::Pool::Global;
    throw CheckpointError("unknown pooling '" + s + "'");
}

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string_view frontend_name(Frontend f) {
    switch (f) {
        case Frontend::Mel: return "mel";
        case Frontend::Cqt: return "cqt";
        case Frontend::Gam: return "gam";
        case Frontend::Visual: return "vis";
    }
    return "mel";
}

std::optional<Frontend> parse_frontend(std::string_view name) {
    for (Frontend f : {Frontend::Mel, Frontend::Cqt, Frontend::Gam, Frontend::Visual}) {
        if (frontend_name(f) == name) return f;
    }
    if (name == "visual") return Frontend::Visual;
    return std::nullopt;
}

int frontend_channels(Frontend f) { return f == Frontend::Visual ? 3 : 1; }

std::optional<dsp::SpectrogramKind> spectrogram_kind(Frontend f) {
    switch (f) {
        case Frontend::Mel: return dsp::SpectrogramKind::Mel;
        case Frontend::Cqt: return dsp::SpectrogramKind::Cqt;
        case Frontend::Gam: return dsp::SpectrogramKind::Gam;
        case Frontend::Visual: return std::nullopt;
    }
    return std::nullopt;
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

json to_json(const dsp::DspConfig& c) {
    return {{"sample_rate", c.sample_rate}, {"window", c.window},       {"hop", c.hop},
            {"fft_size", c.fft_size},       {"bins", c.bins},           {"mel_fmin", c.mel_fmin},
            {"mel_fmax", c.mel_fmax},       {"cqt_fmin", c.cqt_fmin},   {"cqt_bins_per_octave", c.cqt_bins_per_octave},
            {"gam_fmin", c.gam_fmin},       {"gam_fmax", c.gam_fmax},   {"log_floor", c.log_floor}};
}

dsp::DspConfig dsp_config_from_json(const json& j) {
    dsp::DspConfig c;
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.window = j.value("window", c.window);
    c.hop = j.value("hop", c.hop);
    c.fft_size = j.value("fft_size", c.fft_size);
    c.bins = j.value("bins", c.bins);
    c.mel_fmin = j.value("mel_fmin", c.mel_fmin);
    c.mel_fmax = j.value("mel_fmax", c.mel_fmax);
    c.cqt_fmin = j.value("cqt_fmin", c.cqt_fmin);
    c.cqt_bins_per_octave = j.value("cqt_bins_per_octave", c.cqt_bins_per_octave);
    c.gam_fmin = j.value("gam_fmin", c.gam_fmin);
    c.gam_fmax = j.value("gam_fmax", c.gam_fmax);
    c.log_floor = j.value("log_floor", c.log_floor);
    return c;
}

json to_json(const nn::NetworkSpec& s) {
    json conv = json::array();
    for (const auto& b : s.conv) {
        conv.push_back({{"out_channels", b.out_channels}, {"pool", pool_name(b.pool)}, {"dropout", b.dropout}});
    }
    json dense = json::array();
    for (const auto& d : s.dense) dense.push_back({{"units", d.units}, {"dropout", d.dropout}});
    return {{"input_channels", s.input_channels}, {"input_size", s.input_size}, {"classes", s.classes},
            {"conv", conv}, {"dense", dense}, {"bn_momentum", s.bn_momentum}, {"bn_epsilon", s.bn_epsilon}};
}

nn::NetworkSpec network_spec_from_json(const json& j) {
    nn::NetworkSpec s;
    s.input_channels = j.at("input_channels").get<int>();
    s.input_size = j.at("input_size").get<int>();
    s.classes = j.at("classes").get<int>();
    for (const auto& b : j.at("conv")) {
        s.conv.push_back({b.at("out_channels").get<int>(), parse_pool(b.at("pool").get<std::string>()),
                          b.at("dropout").get<double>()});
    }
    for (const auto& d : j.at("dense")) s.dense.push_back({d.at("units").get<int>(), d.at("dropout").get<double>()});
    s.bn_momentum = j.value("bn_momentum", s.bn_momentum);
    s.bn_epsilon = j.value("bn_epsilon", s.bn_epsilon);
    s.validate();
    return s;
}

json to_json(const nn::TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.adam.learning_rate},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"adam_epsilon", c.adam.epsilon},
            {"l2_lambda", c.l2_lambda},
            {"batch_size", c.batch_size},
            {"patches_per_segment", c.patches_per_segment},
            {"recalibrate_batchnorm", c.recalibrate_batchnorm},
            {"rng_seed", c.rng_seed}};
}

nn::TrainConfig train_config_from_json(const json& j) {
    nn::TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
    c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patches_per_segment = j.value("patches_per_segment", c.patches_per_segment);
    c.recalibrate_batchnorm = j.value("recalibrate_batchnorm", c.recalibrate_batchnorm);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    return c;
}

json to_json(const augment::AugmentConfig& c) {
    return {{"freq_mask_width", c.freq_mask_width},
            {"time_mask_width", c.time_mask_width},
            {"mixup_distribution", c.mixup_distribution == augment::MixupDistribution::Beta ? "beta" : "uniform"},
            {"beta_alpha", c.beta_alpha},
            {"apply_probability", c.apply_probability},
            {"rng_seed", c.rng_seed}};
}

augment::AugmentConfig augment_config_from_json(const json& j) {
    augment::AugmentConfig c;
    c.freq_mask_width = j.value("freq_mask_width", c.freq_mask_width);
    c.time_mask_width = j.value("time_mask_width", c.time_mask_width);
    c.mixup_distribution = j.value("mixup_distribution", std::string("uniform")) == "beta"
                               ? augment::MixupDistribution::Beta
                               : augment::MixupDistribution::Uniform01;
    c.beta_alpha = j.value("beta_alpha", c.beta_alpha);
    c.apply_probability = j.value("apply_probability", c.apply_probability);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    cstf::Tensor weights;
    json tensors = json::array();
    ckpt.net.visit([&](const std::string& name, const nn::Tensor<float>& t, bool trainable) {
        tensors.push_back({{"name", name},
                           {"shape", {t.rows(), t.cols()}},
                           {"offset", weights.data.size()},
                           {"trainable", trainable}});
        weights.data.insert(weights.data.end(), t.data(), t.data() + t.size());
    });
    weights.dims = {static_cast<std::uint32_t>(weights.data.size())};

    json history = json::array();
    for (const auto& e : ckpt.history) {
        history.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy},
                           {"seconds", e.seconds}});
    }
    json meta = {{"format", kFormat},
                 {"version", kFormatVersion},
                 {"framework", ckpt.framework},
                 {"frontend", frontend_name(ckpt.frontend)},
                 {"dsp", to_json(ckpt.dsp)},
                 {"architecture", to_json(ckpt.net.spec)},
                 {"weights_file", path.filename().string()},
                 {"tensors", tensors},
                 {"train", to_json(ckpt.train)},
                 {"augment", to_json(ckpt.augment)},
                 {"init_seed", ckpt.init_seed},
                 {"epoch", ckpt.epoch},
                 {"loss", ckpt.loss},
                 {"history", history}};
    if (!ckpt.stats.empty()) {
        meta["normalization"] = {{"mean", vector_json(ckpt.stats.mean)}, {"stddev", vector_json(ckpt.stats.stddev)}};
    }

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cstf::write(path, weights);
    std::ofstream out(sidecar_path(path));
    if (!out) throw IoError("cannot write " + sidecar_path(path).string());
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + sidecar_path(path).string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(sidecar_path(path));
    if (!in) throw IoError("cannot open checkpoint metadata " + sidecar_path(path).string());
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError(sidecar_path(path).string() + ": " + e.what());
    }
    try {
        if (meta.value("format", "") != kFormat || meta.value("version", 0) != kFormatVersion) {
            throw CheckpointError("not a version-1 checkpoint");
        }
        Checkpoint ckpt;
        ckpt.framework = meta.at("framework").get<std::string>();
        const auto fe = parse_frontend(meta.at("frontend").get<std::string>());
        if (!fe) throw CheckpointError("unknown frontend '" + meta.at("frontend").get<std::string>() + "'");
        ckpt.frontend = *fe;
        ckpt.dsp = dsp_config_from_json(meta.at("dsp"));
        ckpt.train = train_config_from_json(meta.at("train"));
        ckpt.augment = augment_config_from_json(meta.at("augment"));
        ckpt.init_seed = meta.value("init_seed", std::uint64_t{0});
        ckpt.epoch = meta.value("epoch", 0);
        ckpt.loss = meta.value("loss", 0.0);
        for (const auto& e : meta.value("history", json::array())) {
            ckpt.history.push_back({e.at("epoch").get<int>(), e.at("loss").get<double>(),
                                    e.at("train_accuracy").get<double>(), e.at("seconds").get<double>()});
        }
        if (meta.contains("normalization")) {
            ckpt.stats.mean = vector_from_json(meta["normalization"].at("mean"));
            ckpt.stats.stddev = vector_from_json(meta["normalization"].at("stddev"));
        }

        ckpt.net = nn::build_network<float>(network_spec_from_json(meta.at("architecture")), 0);
        const cstf::Tensor weights = cstf::read(path);
        if (weights.dims.size() != 1) throw CheckpointError("weights must be a rank-1 tensor");
        const auto& entries = meta.at("tensors");
        std::size_t index = 0;
        ckpt.net.visit([&](const std::string& name, nn::Tensor<float>& t, bool) {
            if (index >= entries.size()) throw CheckpointError("metadata lists too few tensors");
            const auto& e = entries[index++];
            const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
            if (e.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != t.rows() ||
                shape[1] != t.cols()) {
                throw CheckpointError("tensor '" + name + "' does not match the architecture");
            }
            const auto offset = e.at("offset").get<std::size_t>();
            if (offset + static_cast<std::size_t>(t.size()) > weights.data.size()) {
                throw CheckpointError("tensor '" + name + "' runs past the end of the weights");
            }
            std::copy_n(weights.data.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data());
        });
        if (index != entries.size()) throw CheckpointError("metadata lists too many tensors");
        if (ckpt.net.spec.input_channels != frontend_channels(ckpt.frontend)) {
            throw CheckpointError("input channels do not match the frontend");
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw CheckpointError(sidecar_path(path).string() + ": " + e.what());
    }
}

}  // namespace crowdscene::pipeline
