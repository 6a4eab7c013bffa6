#include "crowdscene/service.hpp"

#include "crowdscene/audio.hpp"

#include <httplib.h>

namespace crowdscene::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json probs_json(const ProbVector& p) {
    json j = json::object();
    for (SceneLabel l : kAllLabels) j[std::string(label_name(l))] = p(label_code(l));
    return j;
}

json error_json(std::string_view message) { return {{"error", message}}; }

std::shared_ptr<const ModelSnapshot> load_snapshot(const ServiceConfig& cfg) {
    auto snap = std::make_shared<ModelSnapshot>();
    snap->scheme = cfg.scheme;
    for (const auto& p : cfg.checkpoints) snap->models.push_back(pipeline::load_checkpoint(p));
    if (snap->models.empty()) throw fusion::EmptyFrameworks("service needs at least one checkpoint");
    return snap;
}

json model_json(const ModelSnapshot& snap) {
    json frameworks = json::array();
    for (const auto& m : snap.models) frameworks.push_back(m.framework);
    return {{"frameworks", frameworks}, {"fusion", fusion::scheme_name(snap.scheme)}};
}

}  // namespace

json classification_json(const std::vector<pipeline::SegmentClassification>& segments, const ModelSnapshot& snap) {
    json entries = json::array();
    for (const auto& s : segments) {
        json per_model = json::array();
        for (const auto& m : s.per_model) {
            per_model.push_back({{"framework", m.source},
                                 {"probs", probs_json(m.prob)},
                                 {"predicted", label_name(m.label)}});
        }
        entries.push_back({{"segment_index", s.segment_index},
                           {"start_s", s.start_s},
                           {"probs", probs_json(s.fused.prob)},
                           {"predicted", label_name(s.fused.label)},
                           {"valid_distribution", s.fused.valid_distribution},
                           {"per_model", per_model}});
    }
    return {{"segments", entries}, {"model", model_json(snap)}};
}

Classifier::Classifier(ServiceConfig cfg) : cfg_(std::move(cfg)), snapshot_(load_snapshot(cfg_)) {}

Classifier::Classifier(ServiceConfig cfg, std::shared_ptr<const ModelSnapshot> snapshot)
    : cfg_(std::move(cfg)), snapshot_(std::move(snapshot)) {
    if (!snapshot_ || snapshot_->models.empty()) throw fusion::EmptyFrameworks("service needs at least one model");
}

void Classifier::reload() {
    auto fresh = load_snapshot(cfg_);
    std::lock_guard lock(mutex_);
    snapshot_ = std::move(fresh);
}

std::shared_ptr<const ModelSnapshot> Classifier::snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
}

Reply Classifier::health() const {
    return {200, {{"status", "ok"}, {"model", model_json(*snapshot())}}};
}

Reply Classifier::classify_bytes(std::span<const unsigned char> wav) const {
    if (wav.size() > cfg_.max_upload_bytes) {
        return {413, error_json("upload of " + std::to_string(wav.size()) + " bytes exceeds the limit of " +
                                std::to_string(cfg_.max_upload_bytes))};
    }
    PcmBuffer pcm;
    try {
        pcm = decode_wav(wav);
    } catch (const std::exception& e) {
        return {400, error_json(std::string("undecodable audio: ") + e.what())};
    }
    const auto snap = snapshot();
    try {
        return {200, classification_json(pipeline::classify_pcm(snap->models, snap->scheme, pcm), *snap)};
    } catch (const dsp::TooShort& e) {
        return {422, error_json(e.what())};
    } catch (const dsp::EmptyInput& e) {
        return {422, error_json(e.what())};
    } catch (const std::exception& e) {
        return {500, error_json(std::string("inference failed: ") + e.what())};
    }
}

Reply Classifier::classify_path(const fs::path& path) const {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) return {400, error_json("cannot read " + path.string() + ": " + ec.message())};
    if (size > cfg_.max_upload_bytes) return {413, error_json("file exceeds the upload limit")};
    try {
        return classify_bytes(read_file_bytes(path));
    } catch (const IoError& e) {
        return {400, error_json(e.what())};
    }
}

struct HttpServer::Impl {
    Classifier& classifier;
    httplib::Server server;

    explicit Impl(Classifier& c) : classifier(c) {
        server.set_payload_max_length(c.config().max_upload_bytes);
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, classifier.health());
        });
        server.Post("/classify", [this, send](const httplib::Request& req, httplib::Response& res) {
            if (req.is_multipart_form_data()) {
                if (!req.has_file("file")) {
                    send(res, {400, error_json("multipart upload needs a 'file' field")});
                    return;
                }
                const auto& content = req.get_file_value("file").content;
                send(res, classifier.classify_bytes(
                              {reinterpret_cast<const unsigned char*>(content.data()), content.size()}));
                return;
            }
            if (req.get_header_value("Content-Type").starts_with("application/json")) {
                if (!classifier.config().allow_server_paths) {
                    send(res, {400, error_json("server-side paths are disabled")});
                    return;
                }
                const json body = json::parse(req.body, nullptr, false);
                if (body.is_discarded() || !body.contains("path") || !body["path"].is_string()) {
                    send(res, {400, error_json("expected {\"path\": \"...\"}")});
                    return;
                }
                send(res, classifier.classify_path(body["path"].get<std::string>()));
                return;
            }
            if (req.body.empty()) {
                send(res, {400, error_json("empty request body")});
                return;
            }
            send(res, classifier.classify_bytes(
                          {reinterpret_cast<const unsigned char*>(req.body.data()), req.body.size()}));
        });
        server.Post("/reload", [this, send](const httplib::Request&, httplib::Response& res) {
            try {
                classifier.reload();
                send(res, classifier.health());
            } catch (const std::exception& e) {
                send(res, {500, error_json(std::string("reload failed: ") + e.what())});
            }
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            res.status = 500;
            res.set_content(error_json(what).dump(), "application/json");
        });
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                res.set_content(error_json(httplib::status_message(res.status)).dump(), "application/json");
            }
        });
    }
};

HttpServer::HttpServer(Classifier& classifier) : impl_(std::make_unique<Impl>(classifier)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace crowdscene::service
