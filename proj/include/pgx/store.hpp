#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pgx/checkpoint.hpp"
#include "pgx/graph.hpp"

namespace pgx {

/// A run is addressed by its name and seed; its directory is "<name>-s<seed>".
struct RunId {
    std::string name;
    std::uint64_t seed = 0;

    std::string dir_name() const;
    friend bool operator==(const RunId&, const RunId&) = default;
};

/// Everything a run directory holds. Models are "<key>.ckpt", tensors
/// "<key>.tensor", sparse matrices "<key>.csr", reports "reports/<key>.json"
/// and manifests "manifests/<key>.txt".
struct RunArtifacts {
    std::map<std::string, TrainedModel> models;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, CsrMatrix> matrices;
    std::map<std::string, std::string> reports;
    std::map<std::string, std::string> manifests;

    friend bool operator==(const RunArtifacts&, const RunArtifacts&) = default;
};

/// Workspace layout:
///   graph/                   bundle read by load_graph_bundle
///   reports/, manifests/     workspace-level outputs (generate)
///   runs/<name>-s<seed>/     one directory per run
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path graph_dir() const { return root_ / "graph"; }
    std::filesystem::path run_dir(const RunId& run) const { return root_ / "runs" / run.dir_name(); }

    bool has_graph() const;
    Graph load_graph() const;
    void save_graph(const Graph& g) const;

    void put_model(const RunId& run, const std::string& key, const TrainedModel& model) const;
    TrainedModel get_model(const RunId& run, const std::string& key) const;
    void put_tensor(const RunId& run, const std::string& key, const Tensor& t) const;
    Tensor get_tensor(const RunId& run, const std::string& key) const;
    void put_matrix(const RunId& run, const std::string& key, const CsrMatrix& m) const;
    CsrMatrix get_matrix(const RunId& run, const std::string& key) const;
    void put_report(const RunId& run, const std::string& key, const std::string& json) const;
    std::string get_report(const RunId& run, const std::string& key) const;
    void put_manifest(const RunId& run, const std::string& key, const std::string& text) const;
    std::string get_manifest(const RunId& run, const std::string& key) const;

    /// Path of an artifact relative to the run directory, e.g. "student.ckpt".
    bool has(const RunId& run, const std::string& relative) const;
    /// The relative paths in `required` that are absent.
    std::vector<std::string> missing(const RunId& run, const std::vector<std::string>& required) const;

    /// Workspace-level text files (relative to the root).
    void put_text(const std::filesystem::path& relative, const std::string& text) const;
    std::string get_text(const std::filesystem::path& relative) const;

private:
    std::filesystem::path root_;
};

void save_run(const ArtifactStore& store, const RunId& run, const RunArtifacts& artifacts);
/// Loads every artifact found in the run directory.
RunArtifacts load_run(const ArtifactStore& store, const RunId& run);

} // namespace pgx
