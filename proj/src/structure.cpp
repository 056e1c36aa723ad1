#include "pgx/structure.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pgx {

PreferenceVector PreferenceVector::uniform(std::size_t n) {
    if (n == 0) {
        throw Error("preference vector over zero nodes");
    }
    return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

PreferenceVector PreferenceVector::one_hot(std::size_t n, std::size_t v) {
    if (v >= n) {
        throw Error("preference node " + std::to_string(v) + " is out of range");
    }
    PreferenceVector p{std::vector<double>(n, 0.0)};
    p.values[v] = 1.0;
    return p;
}

PreferenceVector PreferenceVector::from_weights(std::size_t n, const std::map<std::size_t, double>& weights) {
    PreferenceVector p{std::vector<double>(n, 0.0)};
    double total = 0.0;
    for (const auto& [v, w] : weights) {
        if (v >= n) {
            throw Error("preference node " + std::to_string(v) + " is out of range");
        }
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error("preference weights must be finite and nonnegative");
        }
        p.values[v] = w;
        total += w;
    }
    if (!(total > 0.0)) {
        throw Error("preference weights are all zero");
    }
    for (double& x : p.values) {
        x /= total;
    }
    return p;
}

void PreferenceVector::validate(std::size_t n) const {
    if (values.size() != n) {
        throw Error("preference vector has " + std::to_string(values.size()) + " entries for " +
                    std::to_string(n) + " nodes");
    }
    double total = 0.0;
    for (double v : values) {
        if (!(v >= 0.0)) {
            throw Error("preference vector has a negative or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error("preference vector sums to " + std::to_string(total) + ", not 1");
    }
}

std::uint64_t PreferenceVector::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void PprConfig::validate() const {
    if (!(damping >= 0.0 && damping < 1.0)) {
        throw Error("PageRank damping must lie in [0, 1)");
    }
    if (!(tol > 0.0)) {
        throw Error("PageRank tolerance must be positive");
    }
    if (max_iter == 0) {
        throw Error("PageRank needs at least one iteration");
    }
}

std::vector<std::size_t> NodeRanks::order() const {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

std::vector<std::size_t> NodeRanks::top(std::size_t k) const {
    std::vector<std::size_t> idx = order();
    idx.resize(std::min(k, idx.size()));
    return idx;
}

void require_row_stochastic(const CsrMatrix& a) {
    if (a.rows != a.cols) {
        throw Error("interaction matrix must be square");
    }
    for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
            if (!(a.val[e] >= 0.0)) {
                throw Error("interaction matrix has a negative entry in row " + std::to_string(r));
            }
            s += a.val[e];
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw Error("non-stochastic row " + std::to_string(r) + " (sums to " + std::to_string(s) + ")");
        }
    }
}

NodeRanks personalized_pagerank(const CsrMatrix& a, const PreferenceVector& pi, const PprConfig& cfg) {
    cfg.validate();
    require_row_stochastic(a);
    pi.validate(a.rows);
    const std::size_t n = a.rows;
    const double d = cfg.damping;
    NodeRanks out;
    std::vector<double> r = pi.values;
    std::vector<double> next(n);
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = (1.0 - d) * pi.values[i];
        }
        if (cfg.transpose) {
            // (A^T r)_j = sum_i A[i, j] r_i
            for (std::size_t i = 0; i < n; ++i) {
                const double ri = d * r[i];
                for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
                    next[a.col[e]] += a.val[e] * ri;
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
                    s += a.val[e] * r[a.col[e]];
                }
                next[i] += d * s;
            }
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            delta += std::abs(next[i] - r[i]);
        }
        r.swap(next);
        out.iterations = it + 1;
        out.residual = delta;
        if (delta < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    if (!cfg.transpose) {
        const double total = std::accumulate(r.begin(), r.end(), 0.0);
        for (double& v : r) {
            v /= total;
        }
    }
    out.scores = std::move(r);
    return out;
}

NodeRanks personalized_pagerank(const InteractionMatrix& a, const PreferenceVector& pi, const PprConfig& cfg) {
    return personalized_pagerank(a.matrix, pi, cfg);
}

std::string export_ranks(const NodeRanks& ranks) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t v : ranks.order()) {
        os << v << ' ' << ranks.scores[v] << '\n';
    }
    return os.str();
}

StructureExplanation explain_structure(const TrainedModel& teacher, const Graph& graph,
                                       const PreferenceVector& pi, const ModelSpec& student_spec,
                                       const KDConfig& kd, const PprConfig& ppr) {
    if (!has_interaction_structure(student_spec.arch)) {
        throw Error(std::string("structure explanation needs an SGAT or GCN-LPA student, got ") +
                    to_string(student_spec.arch));
    }
    pi.validate(graph.num_nodes);
    ppr.validate();
    StructureExplanation out;
    out.student = distill_offline(teacher, student_spec, graph, kd);
    out.interaction = extract_interaction_matrix(out.student, graph);
    out.ranks = personalized_pagerank(out.interaction, pi, ppr);
    return out;
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 && bb == 0.0) {
        return 1.0;
    }
    if (aa == 0.0 || bb == 0.0) {
        return 0.0;
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

} // namespace

SimilarityScores similarity_scores(const Graph& graph, std::span<const std::size_t> predictions,
                                   std::size_t root, std::size_t k) {
    if (predictions.size() != graph.num_nodes) {
        throw ShapeError("one prediction per node is required");
    }
    const Subgraph sub = khop_subgraph(graph, root, k);
    SimilarityScores s;
    double feature_total = 0.0;
    std::size_t same = 0;
    for (std::size_t v : sub.nodes) {
        if (v == root) {
            continue;
        }
        ++s.neighbors;
        feature_total += cosine(graph.features.row(root), graph.features.row(v));
        same += predictions[v] == predictions[root] ? 1 : 0;
    }
    if (s.neighbors == 0) {
        return s;
    }
    s.empty_neighborhood = false;
    s.feature_sim = 100.0 * feature_total / static_cast<double>(s.neighbors);
    s.label_sim = 100.0 * static_cast<double>(same) / static_cast<double>(s.neighbors);
    return s;
}

LocalExplanation local_explanation(const Graph& graph, std::span<const std::size_t> predictions,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const PprConfig& ppr) {
    if (root >= graph.num_nodes) {
        throw Error("root " + std::to_string(root) + " is out of range");
    }
    return local_explanation(graph, predictions, a, root, k, top_m,
                             personalized_pagerank(a, PreferenceVector::one_hot(graph.num_nodes, root), ppr));
}

LocalExplanation local_explanation(const Graph& graph, std::span<const std::size_t> predictions,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const NodeRanks& ranks) {
    if (root >= graph.num_nodes) {
        throw Error("root " + std::to_string(root) + " is out of range");
    }
    if (k == 0) {
        throw Error("local explanation needs k >= 1");
    }
    if (a.matrix.rows != graph.num_nodes) {
        throw ShapeError("interaction matrix does not match the graph");
    }
    if (ranks.scores.size() != graph.num_nodes) {
        throw ShapeError("ranks do not match the graph");
    }
    const Subgraph sub = khop_subgraph(graph, root, k);

    LocalExplanation out;
    out.root = root;
    out.k = k;
    out.prediction = predictions[root];
    out.label = graph.labels[root];
    out.root_score = ranks.scores[root];
    for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
        if (sub.nodes[i] != root) {
            out.ranked.push_back({sub.nodes[i], sub.hops[i], ranks.scores[sub.nodes[i]]});
        }
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const NeighborInfluence& x, const NeighborInfluence& y) {
        return x.score != y.score ? x.score > y.score : x.node < y.node;
    });
    if (top_m > 0 && out.ranked.size() > top_m) {
        out.ranked.resize(top_m);
    }
    out.per_hop.resize(k);
    for (const NeighborInfluence& n : out.ranked) {
        out.per_hop[n.hop - 1].push_back(n);
    }

    std::vector<std::size_t> kept{root};
    for (const NeighborInfluence& n : out.ranked) {
        kept.push_back(n.node);
    }
    std::sort(kept.begin(), kept.end());
    for (std::size_t dst : kept) {
        for (std::size_t e = a.matrix.row_ptr[dst]; e < a.matrix.row_ptr[dst + 1]; ++e) {
            const std::size_t src = a.matrix.col[e];
            if (src != dst && std::binary_search(kept.begin(), kept.end(), src)) {
                out.edges.push_back({src, dst, a.matrix.val[e]});
            }
        }
    }
    out.similarity = similarity_scores(graph, predictions, root, k);
    return out;
}

LocalExplanation local_explanation(const TrainedModel& student, const Graph& graph,
                                   const InteractionMatrix& a, std::size_t root, std::size_t k,
                                   std::size_t top_m, const PprConfig& ppr) {
    const auto pred = argmax_rows(forward(student, graph));
    return local_explanation(graph, pred, a, root, k, top_m, ppr);
}

} // namespace pgx
