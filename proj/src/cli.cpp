#include "crowdscene/cli.hpp"

#include "crowdscene/eval.hpp"
#include "crowdscene/pipeline.hpp"
#include "crowdscene/service.hpp"
#include "crowdscene/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace crowdscene {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Accepts JSON objects (nested objects become sections) as well as TOML/INI.
class JsonOrTomlConfig : public CLI::ConfigTOML {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto first = text.find_first_not_of(" \t\r\n");
        if (first == std::string::npos || text[first] != '{') {
            std::istringstream again(text);
            return CLI::ConfigTOML::from_config(again);
        }
        const json j = json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw CLI::ConversionError("config file is not a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

    static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(value, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }
};

void add_config(CLI::App* sub) {
    sub->set_config("--config", "", "TOML or JSON file with option defaults; flags override it");
    sub->config_formatter(std::make_shared<JsonOrTomlConfig>());
}

CLI::Validator frontend_validator() {
    return CLI::IsMember({"mel", "cqt", "gam", "vis"});
}

CLI::Validator scheme_validator() { return CLI::IsMember({"mean", "prod", "max"}); }

CLI::Validator split_validator() { return CLI::IsMember({"train", "test"}); }

pipeline::Frontend frontend_of(const std::string& s) { return *pipeline::parse_frontend(s); }

void progress_line(const std::string& what, std::size_t done, std::size_t total) {
    if (done == total || done % 25 == 0) {
        std::cerr << "\r" << what << ": " << done << "/" << total << std::flush;
        if (done == total) std::cerr << '\n';
    }
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    synth::SynthSpec spec;
};

void run_synth(const SynthArgs& a) {
    const auto m = synth::generate_corpus(a.spec, a.out);
    std::cerr << "wrote " << m.total(manifest::Split::Train) << " train and " << m.total(manifest::Split::Test)
              << " test segments to " << (a.out / "manifest.csv").string() << '\n';
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
    fs::path video, out, manifest_out;
    manifest::IngestOptions options;
    std::string label, split;
};

void run_ingest(const IngestArgs& a) {
    auto records = manifest::ingest_media(a.video, a.out, a.options);
    for (auto& r : records) {
        r.label = *parse_label(a.label);
        r.split = *manifest::parse_split(a.split);
    }
    std::cerr << "ingested " << records.size() << " segment(s) from " << a.video.string() << '\n';
    if (records.empty()) return;
    if (!a.manifest_out.empty()) {
        std::vector<manifest::SegmentRecord> all;
        if (fs::exists(a.manifest_out)) all = manifest::load_manifest(a.manifest_out).records();
        all.insert(all.end(), records.begin(), records.end());
        manifest::write_manifest(a.manifest_out, manifest::DatasetManifest(std::move(all)));
    }
}

// ---- features -------------------------------------------------------------

struct FeaturesArgs {
    std::string kind = "mel";
    fs::path manifest, out;
    bool overwrite = false;
};

void run_features(const FeaturesArgs& a) {
    const auto m = manifest::load_manifest(a.manifest);
    const pipeline::FeatureStore store(a.out);
    const auto f = frontend_of(a.kind);
    const auto summary = pipeline::extract_features(m, store, f, {}, a.overwrite, [&](std::size_t d, std::size_t t) {
        progress_line(a.kind + " features", d, t);
    });
    std::cerr << "wrote " << summary.written << ", kept " << summary.skipped << " existing under "
              << (a.out / a.kind).string() << '\n';
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string kind = "mel";
    fs::path manifest, features, out;
    pipeline::TrainOptions options;
    std::string mixup = "uniform";
    bool no_recalibrate = false;
};

void run_train(TrainArgs a) {
    a.options.augment.mixup_distribution =
        a.mixup == "beta" ? augment::MixupDistribution::Beta : augment::MixupDistribution::Uniform01;
    a.options.train.recalibrate_batchnorm = !a.no_recalibrate;
    const auto m = manifest::load_manifest(a.manifest);
    const auto f = frontend_of(a.kind);
    const auto ckpt = pipeline::train_model(
        m, pipeline::FeatureStore(a.features), f, a.options,
        [&](const nn::EpochStats& s, const nn::Network<float>&, bool improved) {
            std::fprintf(stderr, "epoch %3d/%d  loss %.5f  train acc %.3f  %.1fs%s\n", s.epoch,
                         a.options.train.epochs, s.loss, s.train_accuracy, s.seconds, improved ? "  *" : "");
        });
    pipeline::save_checkpoint(a.out, ckpt);
    std::cerr << "saved " << ckpt.framework << " (best epoch " << ckpt.epoch << ", loss " << ckpt.loss << ") to "
              << a.out.string() << '\n';
}

// ---- predict --------------------------------------------------------------

struct PredictArgs {
    fs::path checkpoint, manifest, features, out, plots;
    std::string split = "test";
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void run_predict(const PredictArgs& a) {
    const auto ckpt = pipeline::load_checkpoint(a.checkpoint);
    const auto m = manifest::load_manifest(a.manifest);
    const auto preds = pipeline::predict(ckpt, m, pipeline::FeatureStore(a.features), *manifest::parse_split(a.split),
                                         [](std::size_t d, std::size_t t) { progress_line("predict", d, t); });
    if (a.out.empty() || a.out == "-") {
        fusion::write_probability_csv(std::cout, preds);
    } else {
        fusion::write_probability_csv(a.out, preds);
    }
    if (!a.plots.empty()) {
        for (const auto& p : preds) {
            std::vector<std::pair<std::string, double>> bars;
            for (SceneLabel l : kAllLabels) bars.emplace_back(std::string(label_display_name(l)), 100.0 * p.prob(label_code(l)));
            std::string file = p.segment_id;
            std::replace(file.begin(), file.end(), '/', '_');
            write_text(a.plots / (file + ".svg"),
                       eval::render_bar_chart_svg(p.segment_id + " (" + p.source + ")", bars, 100.0));
        }
    }
}

// ---- fuse -----------------------------------------------------------------

struct FuseArgs {
    std::string scheme = "prod";
    std::vector<fs::path> inputs;
    fs::path out;
};

void run_fuse(const FuseArgs& a) {
    fusion::FusionInput all;
    for (const auto& p : a.inputs) {
        auto in = fusion::read_probability_csv(p);
        for (auto& f : in.frameworks) all.frameworks.push_back(std::move(f));
    }
    const auto fused = fusion::fuse(all, *fusion::parse_scheme(a.scheme));
    if (a.out.empty() || a.out == "-") {
        fusion::write_probability_csv(std::cout, fused);
    } else {
        fusion::write_probability_csv(a.out, fused);
    }
    std::cerr << "fused " << all.frameworks.size() << " framework(s) over " << fused.size() << " segments with "
              << a.scheme << '\n';
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
    fs::path predictions, manifest, json_out, svg_out;
    std::string split = "test", framework;
};

void run_evaluate(const EvaluateArgs& a) {
    const auto input = fusion::read_probability_csv(a.predictions);
    const std::vector<fusion::SegmentPrediction>* chosen = nullptr;
    if (!a.framework.empty()) {
        for (const auto& f : input.frameworks) {
            if (!f.empty() && f.front().source == a.framework) chosen = &f;
        }
        if (chosen == nullptr) throw Error("framework '" + a.framework + "' not found in " + a.predictions.string());
    } else if (input.frameworks.size() == 1) {
        chosen = &input.frameworks.front();
    } else {
        throw Error(a.predictions.string() + " holds " + std::to_string(input.frameworks.size()) +
                    " frameworks; pick one with --framework");
    }
    const auto m = manifest::load_manifest(a.manifest);
    const auto report = eval::evaluate(*chosen, m, *manifest::parse_split(a.split));
    std::cout << eval::render_text(report);
    if (!a.json_out.empty()) write_text(a.json_out, eval::to_json(report).dump(2) + "\n");
    if (!a.svg_out.empty()) write_text(a.svg_out, eval::render_report_svg(report));
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
    std::vector<fs::path> checkpoints;
    std::string scheme = "prod", host = "127.0.0.1";
    int port = 8080;
    double max_upload_mb = 100.0;
    bool allow_paths = false;
};

service::HttpServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
    if (g_server != nullptr) g_server->stop();
}

void run_serve(const ServeArgs& a) {
    service::ServiceConfig cfg;
    cfg.checkpoints = a.checkpoints;
    cfg.scheme = *fusion::parse_scheme(a.scheme);
    cfg.max_upload_bytes = static_cast<std::size_t>(a.max_upload_mb * 1024.0 * 1024.0);
    cfg.allow_server_paths = a.allow_paths;
    service::Classifier classifier(cfg);
    service::HttpServer server(classifier);
    const int port = server.bind(a.host, a.port);
    if (port < 0) throw IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
    g_server = &server;
    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
    std::cerr << "serving " << classifier.snapshot()->models.size() << " model(s) with " << a.scheme << " fusion on http://"
              << a.host << ":" << port << '\n';
    server.listen();
    g_server = nullptr;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Audio-visual crowded-scene classification toolkit", "crowdscene"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
    synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
    synth_cmd->add_option("--train-per-class", synth_args.spec.train_per_class)->capture_default_str();
    synth_cmd->add_option("--test-per-class", synth_args.spec.test_per_class)->capture_default_str();
    synth_cmd->add_option("--segments-per-video", synth_args.spec.segments_per_video)->capture_default_str();
    synth_cmd->add_option("--sample-rate", synth_args.spec.sample_rate)->capture_default_str();
    synth_cmd->add_flag("--frames", synth_args.spec.with_frames, "Also write frame images");
    synth_cmd->add_option("--frames-per-segment", synth_args.spec.frames_per_segment)->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.spec.rng_seed)->capture_default_str();
    add_config(synth_cmd);

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "Cut a video into 10 s segments with an external decoder");
    ingest_cmd->add_option("--video", ingest_args.video)->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest_args.out, "Directory for segment WAVs")->required();
    ingest_cmd->add_option("--decoder-cmd", ingest_args.options.decoder_cmd_template,
                           "Command with {input} {output} {start} {duration}")->required();
    ingest_cmd->add_option("--frames-cmd", ingest_args.options.frames_cmd_template);
    ingest_cmd->add_option("--video-id", ingest_args.options.video_id);
    ingest_cmd->add_option("--label", ingest_args.label)->required()->check(
        CLI::IsMember({"riot", "noise_street", "firework_event", "music_event", "sport_atmosphere"}));
    ingest_cmd->add_option("--split", ingest_args.split)->required()->check(split_validator());
    ingest_cmd->add_option("--manifest", ingest_args.manifest_out, "Manifest CSV to create or extend");
    add_config(ingest_cmd);

    FeaturesArgs features_args;
    auto* features_cmd = app.add_subcommand("features", "Extract spectrogram or frame features to CSTF");
    features_cmd->add_option("--kind", features_args.kind)->check(frontend_validator())->capture_default_str();
    features_cmd->add_option("--manifest", features_args.manifest)->required()->check(CLI::ExistingFile);
    features_cmd->add_option("--out", features_args.out, "Feature store root")->required();
    features_cmd->add_flag("--overwrite", features_args.overwrite);
    add_config(features_cmd);

    TrainArgs train_args;
    auto& to = train_args.options;
    auto* train_cmd = app.add_subcommand("train", "Train a VGG15 framework on cached features");
    train_cmd->add_option("--kind", train_args.kind)->check(frontend_validator())->capture_default_str();
    train_cmd->add_option("--manifest", train_args.manifest)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--features", train_args.features, "Feature store root")->required();
    train_cmd->add_option("--out", train_args.out, "Checkpoint path")->required();
    train_cmd->add_option("--framework", to.framework, "Name used in probability files");
    train_cmd->add_option("--epochs", to.train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", to.train.adam.learning_rate)->capture_default_str();
    train_cmd->add_option("--l2", to.train.l2_lambda, "L2 coefficient lambda")->capture_default_str();
    train_cmd->add_option("--batch-size", to.train.batch_size)->capture_default_str();
    train_cmd->add_option("--patches-per-segment", to.train.patches_per_segment, "0 = all")->capture_default_str();
    train_cmd->add_flag("--no-recalibrate", train_args.no_recalibrate, "Keep the moving-average BN statistics");
    train_cmd->add_option("--seed", to.train.rng_seed, "Batch order and dropout seed")->capture_default_str();
    train_cmd->add_option("--init-seed", to.init_seed)->capture_default_str();
    train_cmd->add_option("--augment-seed", to.augment.rng_seed)->capture_default_str();
    train_cmd->add_option("--freq-mask", to.augment.freq_mask_width)->capture_default_str();
    train_cmd->add_option("--time-mask", to.augment.time_mask_width)->capture_default_str();
    train_cmd->add_option("--mask-probability", to.augment.apply_probability)->capture_default_str();
    train_cmd->add_option("--mixup", train_args.mixup)->check(CLI::IsMember({"uniform", "beta"}))->capture_default_str();
    train_cmd->add_option("--beta-alpha", to.augment.beta_alpha)->capture_default_str();
    add_config(train_cmd);

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "Write per-segment probabilities for a split");
    predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--manifest", predict_args.manifest)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--features", predict_args.features)->required();
    predict_cmd->add_option("--split", predict_args.split)->check(split_validator())->capture_default_str();
    predict_cmd->add_option("--out", predict_args.out, "Probability CSV (default stdout)");
    predict_cmd->add_option("--plots", predict_args.plots, "Directory for per-segment bar charts (SVG)");
    add_config(predict_cmd);

    FuseArgs fuse_args;
    auto* fuse_cmd = app.add_subcommand("fuse", "Late-fuse probability CSVs");
    fuse_cmd->add_option("--scheme", fuse_args.scheme)->check(scheme_validator())->capture_default_str();
    fuse_cmd->add_option("--out", fuse_args.out, "Fused CSV (default stdout)");
    fuse_cmd->add_option("inputs", fuse_args.inputs, "Probability CSVs")->required()->check(CLI::ExistingFile);
    add_config(fuse_cmd);

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy and confusion matrix against a manifest");
    eval_cmd->add_option("--predictions", eval_args.predictions)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--manifest", eval_args.manifest)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", eval_args.split)->check(split_validator())->capture_default_str();
    eval_cmd->add_option("--framework", eval_args.framework, "Framework to score when the CSV holds several");
    eval_cmd->add_option("--json", eval_args.json_out, "Write the JSON report here");
    eval_cmd->add_option("--svg", eval_args.svg_out, "Write a per-class accuracy chart here");
    add_config(eval_cmd);

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP classification service");
    serve_cmd->add_option("--checkpoint", serve_args.checkpoints, "Repeat for several frameworks")
        ->required()
        ->check(CLI::ExistingFile);
    serve_cmd->add_option("--scheme", serve_args.scheme)->check(scheme_validator())->capture_default_str();
    serve_cmd->add_option("--host", serve_args.host)->capture_default_str();
    serve_cmd->add_option("--port", serve_args.port, "0 picks a free port")->capture_default_str();
    serve_cmd->add_option("--max-upload-mb", serve_args.max_upload_mb)->capture_default_str();
    serve_cmd->add_flag("--allow-paths", serve_args.allow_paths, "Accept {\"path\": ...} JSON bodies");
    add_config(serve_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) run_synth(synth_args);
        if (ingest_cmd->parsed()) run_ingest(ingest_args);
        if (features_cmd->parsed()) run_features(features_args);
        if (train_cmd->parsed()) run_train(train_args);
        if (predict_cmd->parsed()) run_predict(predict_args);
        if (fuse_cmd->parsed()) run_fuse(fuse_args);
        if (eval_cmd->parsed()) run_evaluate(eval_args);
        if (serve_cmd->parsed()) run_serve(serve_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    for (const auto& a : args) argv.push_back(a.c_str());
    argv.push_back(nullptr);
    return run_cli(static_cast<int>(args.size()), argv.data());
}

}  // namespace crowdscene
