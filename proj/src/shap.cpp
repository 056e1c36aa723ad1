#include "pgx/shap.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace pgx {

ProbabilityFn mlp_probability_fn(const TrainedModel& mlp) {
    if (mlp.spec.arch != Architecture::mlp) {
        throw Error("feature attribution runs on an MLP student");
    }
    return [model = mlp](const Tensor& rows) {
        return ad::softmax_with_temperature(forward_rows(model, rows), 1.0);
    };
}

Tensor make_background(const Graph& graph, BackgroundMode mode, std::size_t count, std::uint64_t seed) {
    if (mode == BackgroundMode::ones) {
        return Tensor(1, graph.feature_dim(), 1.0);
    }
    if (count == 0) {
        throw Error("background needs at least one row");
    }
    const std::vector<std::size_t> train = graph.nodes_in(Split::train);
    if (train.empty()) {
        throw Error("stratified background needs training nodes");
    }
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t v : train) {
        by_class[graph.labels[v]].push_back(v);
    }
    std::mt19937_64 rng(seed);
    const std::size_t total = std::min(count, train.size());
    std::vector<std::size_t> picked;
    for (auto& [c, nodes] : by_class) {
        std::shuffle(nodes.begin(), nodes.end(), rng);
        const double share = static_cast<double>(total) * static_cast<double>(nodes.size()) /
                             static_cast<double>(train.size());
        const std::size_t take = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(share)), 1, nodes.size());
        picked.insert(picked.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(picked.begin(), picked.end());
    return select_rows(graph.features, picked);
}

namespace {

using Mask = std::vector<std::uint8_t>;

struct Game {
    const ProbabilityFn& fn;
    std::span<const double> x;
    const Tensor& background;
    std::size_t target = 0;
    double prediction = 0.0;
    double base = 0.0;

    Game(const ProbabilityFn& f, std::span<const double> xs, const ShapConfig& cfg)
        : fn(f), x(xs), background(cfg.background) {
        if (background.rows() == 0) {
            throw Error("feature attribution needs at least one background row");
        }
        if (background.cols() != x.size()) {
            throw ShapeError("background rows have " + std::to_string(background.cols()) +
                             " features, instance has " + std::to_string(x.size()));
        }
        Tensor row(1, x.size(), std::vector<double>(x.begin(), x.end()));
        const Tensor p = checked(fn(row), 1);
        target = cfg.target ? *cfg.target : argmax_rows(p).front();
        if (target >= p.cols()) {
            throw Error("attribution target class is out of range");
        }
        prediction = p(0, target);
        const Tensor pb = checked(fn(background), background.rows());
        for (std::size_t b = 0; b < pb.rows(); ++b) {
            base += pb(b, target);
        }
        base /= static_cast<double>(pb.rows());
    }

    static Tensor checked(Tensor p, std::size_t rows) {
        if (p.rows() != rows) {
            throw ShapeError("predict returned the wrong number of rows");
        }
        if (!p.all_finite()) {
            throw Error("predict returned a non-finite value");
        }
        return p;
    }

    /// v(S) for masks produced by mask_at(k, out) for k < count.
    template <class MaskAt>
    std::vector<double> values(std::size_t count, MaskAt mask_at) const {
        const std::size_t d = x.size();
        const std::size_t b = background.rows();
        const std::size_t per_chunk = std::max<std::size_t>(1, 8192 / b);
        std::vector<double> out(count, 0.0);
        Mask mask(d);
        for (std::size_t start = 0; start < count; start += per_chunk) {
            const std::size_t n = std::min(per_chunk, count - start);
            Tensor rows(n * b, d);
            for (std::size_t k = 0; k < n; ++k) {
                mask_at(start + k, mask);
                for (std::size_t r = 0; r < b; ++r) {
                    auto dst = rows.row(k * b + r);
                    const auto bg = background.row(r);
                    for (std::size_t i = 0; i < d; ++i) {
                        dst[i] = mask[i] ? x[i] : bg[i];
                    }
                }
            }
            const Tensor p = checked(fn(rows), n * b);
            for (std::size_t k = 0; k < n; ++k) {
                double s = 0.0;
                for (std::size_t r = 0; r < b; ++r) {
                    s += p(k * b + r, target);
                }
                out[start + k] = s / static_cast<double>(b);
            }
        }
        return out;
    }

    FeatureAttribution attribution(std::vector<double> phi, bool exact, std::size_t coalitions,
                                   std::size_t instance) const {
        FeatureAttribution fa;
        fa.phi = std::move(phi);
        fa.base_value = base;
        fa.prediction = prediction;
        fa.target = target;
        fa.instance = instance;
        fa.exact = exact;
        fa.coalitions = coalitions;
        return fa;
    }
};

double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return r;
}

/// Calls f(indices) for every size-s subset of {0..d-1} in lexicographic order.
template <class F>
void for_each_combination(std::size_t d, std::size_t s, F f) {
    std::vector<std::size_t> idx(s);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        f(idx);
        std::size_t i = s;
        while (i > 0 && idx[i - 1] == d - s + i - 1) {
            --i;
        }
        if (i == 0) {
            return;
        }
        ++idx[i - 1];
        for (std::size_t j = i; j < s; ++j) {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

} // namespace

FeatureAttribution exact_shapley(const ProbabilityFn& fn, std::span<const double> x, const ShapConfig& cfg,
                                 std::size_t instance) {
    const std::size_t d = x.size();
    if (d == 0 || d > 24) {
        throw Error("exact Shapley enumeration supports 1 to 24 features");
    }
    const Game game(fn, x, cfg);
    const std::size_t total = std::size_t{1} << d;
    const std::vector<double> v = game.values(total, [d](std::size_t k, Mask& m) {
        for (std::size_t i = 0; i < d; ++i) {
            m[i] = static_cast<std::uint8_t>((k >> i) & 1U);
        }
    });
    // w(s) = s! (d - s - 1)! / d!
    std::vector<double> w(d);
    for (std::size_t s = 0; s < d; ++s) {
        w[s] = 1.0 / (static_cast<double>(d) * binomial(d - 1, s));
    }
    std::vector<double> phi(d, 0.0);
    for (std::size_t k = 0; k < total; ++k) {
        const auto size = static_cast<std::size_t>(std::popcount(k));
        for (std::size_t i = 0; i < d; ++i) {
            if (((k >> i) & 1U) == 0) {
                phi[i] += w[size] * (v[k | (std::size_t{1} << i)] - v[k]);
            }
        }
    }
    // v(full) is the instance prediction and v(empty) the base, up to averaging order
    return game.attribution(std::move(phi), true, total, instance);
}

FeatureAttribution sampled_kernel_shap(const ProbabilityFn& fn, std::span<const double> x,
                                       const ShapConfig& cfg, std::size_t instance) {
    const std::size_t d = x.size();
    if (d < 2) {
        return exact_shapley(fn, x, cfg, instance);
    }
    const std::size_t budget = cfg.samples == 0 ? 2 * d + 2048 : cfg.samples;
    if (budget < d + 2) {
        throw Error("KernelSHAP needs at least d + 2 = " + std::to_string(d + 2) + " coalition samples, got " +
                    std::to_string(budget));
    }
    const Game game(fn, x, cfg);

    const std::size_t num_sizes = d / 2;          // ceil((d - 1) / 2)
    const std::size_t num_paired = (d - 1) / 2;   // floor((d - 1) / 2)
    std::vector<double> size_weight(num_sizes);
    for (std::size_t s = 1; s <= num_sizes; ++s) {
        size_weight[s - 1] = static_cast<double>(d - 1) / static_cast<double>(s * (d - s));
        if (s <= num_paired) {
            size_weight[s - 1] *= 2.0;
        }
    }
    const double weight_sum = std::accumulate(size_weight.begin(), size_weight.end(), 0.0);
    for (double& w : size_weight) {
        w /= weight_sum;
    }

    std::vector<Mask> masks;
    std::vector<double> weights;
    std::map<Mask, std::size_t> index;
    auto add = [&](Mask m, double w) {
        const auto [it, fresh] = index.emplace(m, masks.size());
        if (fresh) {
            masks.push_back(std::move(m));
            weights.push_back(w);
            return true;
        }
        weights[it->second] += w;
        return false;
    };

    // enumerate whole coalition sizes while the budget covers them
    double samples_left = static_cast<double>(budget);
    std::vector<double> remaining = size_weight;
    std::size_t full_sizes = 0;
    for (std::size_t s = 1; s <= num_sizes; ++s) {
        const bool paired = s <= num_paired;
        const double nsubsets = binomial(d, s) * (paired ? 2.0 : 1.0);
        if (samples_left * remaining[s - 1] / nsubsets < 1.0 - 1e-8) {
            break;
        }
        ++full_sizes;
        samples_left -= nsubsets;
        if (remaining[s - 1] < 1.0) {
            const double scale = 1.0 - remaining[s - 1];
            for (double& r : remaining) {
                r /= scale;
            }
        }
        double w = size_weight[s - 1] / binomial(d, s);
        if (paired) {
            w /= 2.0;
        }
        for_each_combination(d, s, [&](const std::vector<std::size_t>& idx) {
            Mask m(d, 0);
            for (std::size_t i : idx) {
                m[i] = 1;
            }
            if (paired) {
                Mask c(d);
                for (std::size_t i = 0; i < d; ++i) {
                    c[i] = m[i] ? 0 : 1;
                }
                add(std::move(c), w);
            }
            add(std::move(m), w);
        });
    }

    // sample the sizes that did not fit
    const std::size_t fixed = masks.size();
    if (full_sizes < num_sizes && samples_left >= 1.0) {
        std::vector<double> rest;
        for (std::size_t s = full_sizes + 1; s <= num_sizes; ++s) {
            rest.push_back(size_weight[s - 1] / (s <= num_paired ? 2.0 : 1.0));
        }
        std::mt19937_64 rng(cfg.seed);
        std::discrete_distribution<std::size_t> pick_size(rest.begin(), rest.end());
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), 0);
        auto left = static_cast<std::size_t>(samples_left);
        // bounded so a fully covered space cannot loop forever
        for (std::size_t draws = 0; left > 0 && draws < 64 * budget; ++draws) {
            const std::size_t s = pick_size(rng) + full_sizes + 1;
            std::shuffle(perm.begin(), perm.end(), rng);
            Mask m(d, 0);
            for (std::size_t i = 0; i < s; ++i) {
                m[perm[i]] = 1;
            }
            Mask c(d);
            for (std::size_t i = 0; i < d; ++i) {
                c[i] = m[i] ? 0 : 1;
            }
            if (add(std::move(m), 1.0)) {
                --left;
            }
            if (left > 0 && s <= num_paired && add(std::move(c), 1.0)) {
                --left;
            }
        }
        double sampled = 0.0;
        for (std::size_t k = fixed; k < weights.size(); ++k) {
            sampled += weights[k];
        }
        double weight_left = 0.0;
        for (std::size_t s = full_sizes + 1; s <= num_sizes; ++s) {
            weight_left += size_weight[s - 1];
        }
        for (std::size_t k = fixed; k < weights.size(); ++k) {
            weights[k] *= weight_left / sampled;
        }
    }

    const std::vector<double> v = game.values(masks.size(), [&](std::size_t k, Mask& m) { m = masks[k]; });

    // eliminate the last coefficient through sum(phi) = prediction - base
    const double delta = game.prediction - game.base;
    const std::size_t n = masks.size();
    Eigen::MatrixXd X(n, d - 1);
    Eigen::VectorXd t(n);
    Eigen::VectorXd w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double zd = masks[k][d - 1];
        for (std::size_t i = 0; i + 1 < d; ++i) {
            X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = masks[k][i] - zd;
        }
        t(static_cast<Eigen::Index>(k)) = v[k] - game.base - zd * delta;
        w(static_cast<Eigen::Index>(k)) = weights[k];
    }
    Eigen::MatrixXd normal = X.transpose() * w.asDiagonal() * X;
    normal.diagonal().array() += cfg.ridge;
    const Eigen::VectorXd rhs = X.transpose() * (w.array() * t.array()).matrix();
    const Eigen::VectorXd beta = normal.ldlt().solve(rhs);
    std::vector<double> phi(d);
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < d; ++i) {
        phi[i] = beta(static_cast<Eigen::Index>(i));
        partial += phi[i];
    }
    phi[d - 1] = delta - partial;
    return game.attribution(std::move(phi), false, n + 2, instance);
}

FeatureAttribution kernel_shap(const ProbabilityFn& fn, std::span<const double> x, const ShapConfig& cfg,
                               std::size_t instance) {
    if (x.size() <= cfg.exact_threshold) {
        return exact_shapley(fn, x, cfg, instance);
    }
    return sampled_kernel_shap(fn, x, cfg, instance);
}

GlobalImportance global_importance(const ProbabilityFn& fn, const Tensor& samples, const ShapConfig& cfg,
                                   std::span<const std::size_t> instance_ids) {
    if (samples.rows() == 0) {
        throw Error("global importance needs at least one sample");
    }
    if (!instance_ids.empty() && instance_ids.size() != samples.rows()) {
        throw ShapeError("one instance id per sample row is required");
    }
    GlobalImportance out;
    out.mean_abs.assign(samples.cols(), 0.0);
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        ShapConfig c = cfg;
        c.seed = cfg.seed + r;
        FeatureAttribution fa = kernel_shap(fn, samples.row(r), c, instance_ids.empty() ? r : instance_ids[r]);
        for (std::size_t i = 0; i < fa.phi.size(); ++i) {
            out.mean_abs[i] += std::abs(fa.phi[i]);
        }
        out.instances.push_back(std::move(fa));
    }
    for (double& m : out.mean_abs) {
        m /= static_cast<double>(samples.rows());
    }
    out.ranking.resize(samples.cols());
    std::iota(out.ranking.begin(), out.ranking.end(), 0);
    std::stable_sort(out.ranking.begin(), out.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return out.mean_abs[a] > out.mean_abs[b]; });
    return out;
}

Graph restrict_features(const Graph& graph, std::span<const std::size_t> columns) {
    Graph g = graph;
    g.features = select_columns(graph.features, columns);
    if (!graph.feature_names.empty()) {
        g.feature_names.clear();
        for (std::size_t c : columns) {
            g.feature_names.push_back(graph.feature_names.at(c));
        }
    }
    return g;
}

namespace {

StudentSummary summarize(const Tensor& teacher_logits, const TrainedModel& student, const Graph& graph,
                         std::vector<std::size_t> features) {
    StudentSummary s;
    s.features = std::move(features);
    const auto test = graph.nodes_in(Split::test);
    const Tensor logits = forward(student, graph);
    s.fidelity = fidelity_from_logits(teacher_logits, logits, graph.labels, test);
    s.final_loss = student.log.final_loss();
    if (graph.num_classes == 2) {
        std::vector<std::size_t> y;
        for (std::size_t v : test) {
            y.push_back(graph.labels[v]);
        }
        s.binary = classification_metrics(positive_scores(logits, test), y);
    }
    return s;
}

} // namespace

TopkReport topk_retrain(const TrainedModel& teacher, const Graph& graph, std::size_t k, const KDConfig& kd,
                        const ShapConfig& cfg, std::span<const std::size_t> explain_nodes, std::size_t hidden) {
    const std::size_t d = graph.feature_dim();
    if (k < 1 || k > d) {
        throw Error("top-k must lie in [1, " + std::to_string(d) + "], got " + std::to_string(k));
    }
    if (explain_nodes.empty()) {
        throw Error("top-k retraining needs nodes to explain");
    }
    ShapConfig shap = cfg;
    if (shap.background.rows() == 0) {
        shap.background = make_background(graph, BackgroundMode::stratified, 50, cfg.seed);
    }
    const Tensor teacher_logits = forward(teacher, graph);

    TopkReport rep;
    rep.k = k;
    const ModelSpec full_spec = default_model_spec(Architecture::mlp, d, graph.num_classes, hidden);
    const TrainedModel full = distill_from_logits(teacher_logits, full_spec, graph, kd);
    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), 0);
    rep.all_features = summarize(teacher_logits, full, graph, all);

    rep.importance = global_importance(mlp_probability_fn(full), select_rows(graph.features, explain_nodes),
                                       shap, explain_nodes);
    rep.selected.assign(rep.importance.ranking.begin(), rep.importance.ranking.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(rep.selected.begin(), rep.selected.end());

    const Graph reduced = restrict_features(graph, rep.selected);
    const ModelSpec top_spec = default_model_spec(Architecture::mlp, k, graph.num_classes, hidden);
    const TrainedModel top = distill_from_logits(teacher_logits, top_spec, reduced, kd);
    rep.top_features = summarize(teacher_logits, top, reduced, rep.selected);
    rep.all_student = full;
    rep.top_student = top;
    return rep;
}

} // namespace pgx
