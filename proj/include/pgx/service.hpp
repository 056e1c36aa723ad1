#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgx/store.hpp"
#include "pgx/structure.hpp"

namespace pgx {

/// Raised at startup; `missing` lists the absent artifacts relative to the workspace.
class MissingArtifactsError : public Error {
public:
    explicit MissingArtifactsError(std::vector<std::string> missing);
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

struct ServiceRequest {
    std::string method = "GET";
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ServiceResponse {
    int status = 200;
    /// JSON text.
    std::string body;
};

/// Artifacts a run must hold before it can be served.
std::vector<std::string> required_service_artifacts();

/// Read-only view of one structure-explanation run. Responses depend only on
/// the loaded artifacts and the request; PPR and feature attributions
/// computed on demand are cached behind a mutex.
class ExplainService {
public:
    /// Throws MissingArtifactsError naming every absent artifact.
    static ExplainService open(const ArtifactStore& store, const RunId& run);

    ServiceResponse handle(const ServiceRequest& request) const;

    std::size_t ppr_cache_size() const;

private:
    struct State;
    explicit ExplainService(std::shared_ptr<State> state);

    ServiceResponse summary() const;
    ServiceResponse global(const ServiceRequest& r) const;
    ServiceResponse local(std::size_t node, const ServiceRequest& r) const;
    ServiceResponse ppr(const ServiceRequest& r) const;
    ServiceResponse explain_feature(const ServiceRequest& r) const;
    ServiceResponse components() const;

    NodeRanks cached_ppr(const PreferenceVector& pi, const PprConfig& cfg) const;

    std::shared_ptr<State> state_;
};

/// Blocking HTTP front end for an ExplainService.
class HttpServer {
public:
    explicit HttpServer(const ExplainService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pgx
