#pragma once

#include "crowdscene/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace crowdscene::service {

struct ServiceConfig {
    std::vector<std::filesystem::path> checkpoints;
    fusion::FusionScheme scheme = fusion::FusionScheme::Prod;
    std::size_t max_upload_bytes = std::size_t{100} << 20;
    /// Lets POST /classify read {"path": ...} from the server's file system.
    bool allow_server_paths = false;
};

/// Immutable set of models shared by in-flight requests.
struct ModelSnapshot {
    std::vector<pipeline::Checkpoint> models;
    fusion::FusionScheme scheme = fusion::FusionScheme::Prod;
};

struct Reply {
    int status = 200;
    nlohmann::json body;
};

nlohmann::json classification_json(const std::vector<pipeline::SegmentClassification>& segments,
                                   const ModelSnapshot& snapshot);

/// Stateless classifier over a swappable model snapshot.
class Classifier {
public:
    explicit Classifier(ServiceConfig cfg);
    Classifier(ServiceConfig cfg, std::shared_ptr<const ModelSnapshot> snapshot);

    /// Reloads the configured checkpoints and swaps them in; in-flight requests keep the old set.
    void reload();
    std::shared_ptr<const ModelSnapshot> snapshot() const;
    const ServiceConfig& config() const { return cfg_; }

    Reply health() const;
    /// 400 undecodable, 413 too large, 422 shorter than one segment, 500 inference failure.
    Reply classify_bytes(std::span<const unsigned char> wav) const;
    Reply classify_path(const std::filesystem::path& path) const;

private:
    ServiceConfig cfg_;
    mutable std::mutex mutex_;
    std::shared_ptr<const ModelSnapshot> snapshot_;
};

/// HTTP front end: GET /health, POST /classify, POST /reload.
class HttpServer {
public:
    explicit HttpServer(Classifier& classifier);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Returns the bound port (an ephemeral one when `port` is 0), or -1 on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace crowdscene::service
