#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pgx/sparse.hpp"
#include "pgx/tensor.hpp"

namespace pgx {

enum class Split : std::uint8_t { none, train, val, test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

/// Node-classification graph. Adjacency is symmetric, binary and duplicate free;
/// self-loops are only stored when the input declared them.
struct Graph {
    std::size_t num_nodes = 0;
    std::size_t num_classes = 0;
    CsrMatrix adjacency;
    Tensor features;
    std::vector<std::size_t> labels;
    std::vector<Split> split;
    std::vector<std::string> feature_names;

    std::size_t num_edges() const noexcept { return adjacency.nnz(); }
    std::size_t feature_dim() const noexcept { return features.cols(); }
    std::vector<std::size_t> nodes_in(Split s) const;
    std::vector<std::size_t> all_nodes() const;

    /// Throws FormatError when an invariant is broken.
    void validate() const;
};

/// Assembles a Graph from an edge list, applying the symmetric closure and
/// dropping duplicates. Empty `split` means every node is unassigned.
Graph make_graph(std::size_t num_nodes, std::size_t num_classes,
                 const std::vector<std::pair<std::size_t, std::size_t>>& edges, Tensor features,
                 std::vector<std::size_t> labels, std::vector<Split> split = {},
                 std::vector<std::string> feature_names = {});

/// Reads a bundle directory with files meta, edges, features, labels, masks.
Graph load_graph_bundle(const std::filesystem::path& dir);
/// Writes the bundle layout read by load_graph_bundle. Each undirected edge is
/// written once (u <= v).
void save_graph_bundle(const Graph& g, const std::filesystem::path& dir);

struct SyntheticSpec {
    std::size_t num_blocks = 2;
    std::size_t nodes_per_block = 50;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t d_informative = 8;
    std::size_t d_noise = 8;
    double class_separation = 1.0;
    /// Block 0 keeps nodes_per_block nodes; the others get nodes_per_block / ratio.
    std::optional<double> imbalance_ratio;
    double train_fraction = 0.2;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    /// Columns are shuffled so informative features are not simply the first ones.
    bool shuffle_columns = true;

    void validate() const;
};

/// Stochastic block model with Gaussian class-centroid features. Feature names
/// are "inf<k>" for informative and "noise<k>" for noise columns.
Graph generate_synthetic_graph(const SyntheticSpec& spec);

/// Desk-scale citation-like graph: several classes, informative features and
/// weak homophily, so node features carry most of the signal.
SyntheticSpec citation_style_spec(std::uint64_t seed = 0);

enum class Normalization { sym, row };

/// Adjacency with the self-loop pattern unioned in (never double counted), values 1.
CsrMatrix with_self_loops(const CsrMatrix& adjacency);

/// sym: D^-1/2 (A+I) D^-1/2, row: D^-1 (A+I).
CsrMatrix normalize_adjacency(const Graph& g, Normalization mode);

/// Same nodes, features and labels; edge set is exactly one self-loop per node.
Graph make_reference_graph(const Graph& g);

enum class FeatureReferenceMode { ones, mean, constant };

struct FeatureReference {
    FeatureReferenceMode mode = FeatureReferenceMode::ones;
    double value = 1.0;

    std::string describe() const;
    static FeatureReference parse(const std::string& text);
};

Tensor make_reference_features(const Graph& g, const FeatureReference& ref = {});

struct Subgraph {
    std::size_t root = 0;
    /// Sorted by (hop, id).
    std::vector<std::size_t> nodes;
    /// Hop distance of nodes[i].
    std::vector<std::size_t> hops;
    /// Stored adjacency entries with both endpoints in `nodes`.
    std::vector<std::pair<std::size_t, std::size_t>> edges;

    bool contains(std::size_t v) const;
    std::optional<std::size_t> hop_of(std::size_t v) const;
};

/// Breadth-first ball of radius k around root.
Subgraph khop_subgraph(const Graph& g, std::size_t root, std::size_t k);

/// Duplicates minority-class indices with replacement until every present class
/// matches the majority count. Output keeps the input order, then appends.
std::vector<std::size_t> oversample_minority(const std::vector<std::size_t>& labels,
                                             const std::vector<std::size_t>& train_indices,
                                             std::uint64_t seed);

/// n / (C * n_c) per class over the given indices; absent classes get weight 0.
std::vector<double> balanced_class_weights(const std::vector<std::size_t>& labels,
                                           const std::vector<std::size_t>& indices,
                                           std::size_t num_classes);

} // namespace pgx
