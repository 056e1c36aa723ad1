#include "pgx/store.hpp"

#include <algorithm>
#include <cctype>

#include "pgx/error.hpp"

namespace pgx {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
    const std::vector<std::uint8_t> b = read_file_bytes(p);
    return {b.begin(), b.end()};
}

void write_text(const fs::path& p, const std::string& text) {
    write_file_bytes(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void check_key(const std::string& key) {
    const bool ok = !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
    if (!ok) throw Error("invalid artifact key '" + key + "'");
}

/// Keys of files in `dir` ending in `ext`, sorted.
std::vector<std::string> keys_with(const fs::path& dir, const std::string& ext) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::string RunId::dir_name() const {
    check_key(name);
    return name + "-s" + std::to_string(seed);
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {}

bool ArtifactStore::has_graph() const { return fs::is_regular_file(graph_dir() / "meta"); }

Graph ArtifactStore::load_graph() const {
    if (!has_graph()) throw Error("workspace has no graph bundle (run generate first)");
    return load_graph_bundle(graph_dir());
}

void ArtifactStore::save_graph(const Graph& g) const {
    fs::remove_all(graph_dir());
    save_graph_bundle(g, graph_dir());
}

void ArtifactStore::put_model(const RunId& run, const std::string& key, const TrainedModel& model) const {
    check_key(key);
    save_checkpoint(model, run_dir(run) / (key + ".ckpt"));
}

TrainedModel ArtifactStore::get_model(const RunId& run, const std::string& key) const {
    check_key(key);
    return load_checkpoint(run_dir(run) / (key + ".ckpt"));
}

void ArtifactStore::put_tensor(const RunId& run, const std::string& key, const Tensor& t) const {
    check_key(key);
    save_tensor(t, run_dir(run) / (key + ".tensor"));
}

Tensor ArtifactStore::get_tensor(const RunId& run, const std::string& key) const {
    check_key(key);
    return load_tensor(run_dir(run) / (key + ".tensor"));
}

void ArtifactStore::put_matrix(const RunId& run, const std::string& key, const CsrMatrix& m) const {
    check_key(key);
    save_csr(m, run_dir(run) / (key + ".csr"));
}

CsrMatrix ArtifactStore::get_matrix(const RunId& run, const std::string& key) const {
    check_key(key);
    return load_csr(run_dir(run) / (key + ".csr"));
}

void ArtifactStore::put_report(const RunId& run, const std::string& key, const std::string& json) const {
    check_key(key);
    write_text(run_dir(run) / "reports" / (key + ".json"), json);
}

std::string ArtifactStore::get_report(const RunId& run, const std::string& key) const {
    check_key(key);
    return read_text(run_dir(run) / "reports" / (key + ".json"));
}

void ArtifactStore::put_manifest(const RunId& run, const std::string& key, const std::string& text) const {
    check_key(key);
    write_text(run_dir(run) / "manifests" / (key + ".txt"), text);
}

std::string ArtifactStore::get_manifest(const RunId& run, const std::string& key) const {
    check_key(key);
    const fs::path p = run_dir(run) / "manifests" / (key + ".txt");
    if (!fs::is_regular_file(p)) throw Error("run " + run.dir_name() + " has no " + key + " manifest");
    return read_text(p);
}

bool ArtifactStore::has(const RunId& run, const std::string& relative) const {
    return fs::is_regular_file(run_dir(run) / relative);
}

std::vector<std::string> ArtifactStore::missing(const RunId& run, const std::vector<std::string>& required) const {
    std::vector<std::string> out;
    for (const std::string& r : required) {
        if (!has(run, r)) out.push_back(r);
    }
    return out;
}

void ArtifactStore::put_text(const fs::path& relative, const std::string& text) const {
    write_text(root_ / relative, text);
}

std::string ArtifactStore::get_text(const fs::path& relative) const { return read_text(root_ / relative); }

void save_run(const ArtifactStore& store, const RunId& run, const RunArtifacts& a) {
    for (const auto& [k, m] : a.models) store.put_model(run, k, m);
    for (const auto& [k, t] : a.tensors) store.put_tensor(run, k, t);
    for (const auto& [k, m] : a.matrices) store.put_matrix(run, k, m);
    for (const auto& [k, r] : a.reports) store.put_report(run, k, r);
    for (const auto& [k, r] : a.manifests) store.put_manifest(run, k, r);
}

RunArtifacts load_run(const ArtifactStore& store, const RunId& run) {
    const fs::path dir = store.run_dir(run);
    if (!fs::is_directory(dir)) throw Error("no run " + run.dir_name() + " in the workspace");
    RunArtifacts a;
    for (const std::string& k : keys_with(dir, ".ckpt")) a.models.emplace(k, store.get_model(run, k));
    for (const std::string& k : keys_with(dir, ".tensor")) a.tensors.emplace(k, store.get_tensor(run, k));
    for (const std::string& k : keys_with(dir, ".csr")) a.matrices.emplace(k, store.get_matrix(run, k));
    for (const std::string& k : keys_with(dir / "reports", ".json")) a.reports.emplace(k, store.get_report(run, k));
    for (const std::string& k : keys_with(dir / "manifests", ".txt")) a.manifests.emplace(k, store.get_manifest(run, k));
    return a;
}

} // namespace pgx
