#pragma once

#include "crowdscene/augment.hpp"
#include "crowdscene/dsp.hpp"
#include "crowdscene/nn/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace crowdscene::pipeline {

CROWDSCENE_DEFINE_ERROR(CheckpointError);

/// Input representation a model consumes.
enum class Frontend { Mel, Cqt, Gam, Visual };

std::string_view frontend_name(Frontend f);
std::optional<Frontend> parse_frontend(std::string_view name);
int frontend_channels(Frontend f);
std::optional<dsp::SpectrogramKind> spectrogram_kind(Frontend f);

/// A trained framework: weights plus everything needed to reproduce its inputs.
struct Checkpoint {
    std::string framework;
    Frontend frontend = Frontend::Mel;
    dsp::DspConfig dsp;
    /// Empty for the visual frontend.
    dsp::FeatureStats stats;
    nn::Network<float> net;
    nn::TrainConfig train;
    augment::AugmentConfig augment;
    std::uint64_t init_seed = 0;
    int epoch = 0;
    double loss = 0.0;
    std::vector<nn::EpochStats> history;
};

/// Weights go to `path` as one flat CSTF vector; metadata goes to `path` + ".json"
/// with the name, shape and offset of every tensor.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

nlohmann::json to_json(const dsp::DspConfig& cfg);
dsp::DspConfig dsp_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::NetworkSpec& spec);
nn::NetworkSpec network_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::TrainConfig& cfg);
nn::TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const augment::AugmentConfig& cfg);
augment::AugmentConfig augment_config_from_json(const nlohmann::json& j);

}  // namespace crowdscene::pipeline
