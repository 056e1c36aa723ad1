#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pgx/distillation.hpp"
#include "pgx/models.hpp"

namespace pgx {

/// Teleport distribution over nodes.
struct PreferenceVector {
    std::vector<double> values;

    static PreferenceVector uniform(std::size_t n);
    static PreferenceVector one_hot(std::size_t n, std::size_t v);
    /// Nonnegative weights normalized to sum 1; throws when all are zero.
    static PreferenceVector from_weights(std::size_t n, const std::map<std::size_t, double>& weights);

    /// Nonnegative and summing to 1 within 1e-9.
    void validate(std::size_t n) const;
    /// FNV-1a over the bit patterns, for cache keys.
    std::uint64_t hash() const;
};

struct PprConfig {
    double damping = 0.85;
    double tol = 1e-9;
    std::size_t max_iter = 200;
    /// true: r = (1-d) pi + d A^T r (rank flows along incoming influence).
    /// false: r = (1-d) pi + d A r, renormalized to sum 1 (who a node influences).
    bool transpose = true;

    void validate() const;
};

struct NodeRanks {
    std::vector<double> scores;
    /// L1 change of the last iteration.
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    /// Node ids by descending score, lower id first on ties.
    std::vector<std::size_t> order() const;
    std::vector<std::size_t> top(std::size_t k) const;
};

/// Throws unless every row sums to 1 within 1e-9 with nonnegative entries.
void require_row_stochastic(const CsrMatrix& a);

NodeRanks personalized_pagerank(const CsrMatrix& a, const PreferenceVector& pi, const PprConfig& cfg = {});
NodeRanks personalized_pagerank(const InteractionMatrix& a, const PreferenceVector& pi,
                                const PprConfig& cfg = {});

/// "node score" lines in descending score order.
std::string export_ranks(const NodeRanks& ranks);

struct StructureExplanation {
    TrainedModel student;
    InteractionMatrix interaction;
    NodeRanks ranks;
};

/// Distill into an SGAT or GCN-LPA student, extract its interaction matrix, rank nodes.
StructureExplanation explain_structure(const TrainedModel& teacher, const Graph& graph,
                                       const PreferenceVector& pi, const ModelSpec& student_spec,
                                       const KDConfig& kd, const PprConfig& ppr = {});

struct SimilarityScores {
    /// Mean cosine similarity between the root's features and each neighbor's, percent.
    double feature_sim = 100.0;
    /// Percent of neighbors predicted with the root's predicted class.
    double label_sim = 100.0;
    std::size_t neighbors = 0;
    /// No neighbor within k hops; both scores are 100 by convention.
    bool empty_neighborhood = true;
};

/// Over nodes within k hops of root, root excluded.
SimilarityScores similarity_scores(const Graph& graph, std::span<const std::size_t> predictions,
                                   std::size_t root, std::size_t k);

struct NeighborInfluence {
    std::size_t node = 0;
    std::size_t hop = 0;
    double score = 0.0;
};

struct InfluenceEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    /// Interaction-matrix entry A*[dst, src]: the share of dst's aggregate taken from src.
    double weight = 0.0;
};

struct LocalExplanation {
    std::size_t root = 0;
    std::size_t k = 0;
    /// Selected neighbors, descending score (lower id on ties).
    std::vector<NeighborInfluence> ranked;
    /// per_hop[h - 1] holds the selected neighbors at hop h, descending score.
    std::vector<std::vector<NeighborInfluence>> per_hop;
    /// Interaction entries among the root and the selected neighbors (self loops omitted).
    std::vector<InfluenceEdge> edges;
    SimilarityScores similarity;
    std::size_t prediction = 0;
    std::size_t label = 0;
    double root_score = 0.0;
};

/// PPR rooted at `root`; neighbors within k hops ranked by score, top_m kept (0 keeps all).
LocalExplanation local_explanation(const Graph& graph, std::span<const std::size_t> predictions,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const PprConfig& ppr = {});
/// Same, from PPR scores already rooted at `root`.
LocalExplanation local_explanation(const Graph& graph, std::span<const std::size_t> predictions,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const NodeRanks& ranks);
LocalExplanation local_explanation(const TrainedModel& student, const Graph& graph,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const PprConfig& ppr = {});

} // namespace pgx
