#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pgx/distillation.hpp"
#include "pgx/metrics.hpp"
#include "pgx/models.hpp"

namespace pgx {

/// Class probabilities (B x C) for a batch of feature rows (B x d).
using ProbabilityFn = std::function<Tensor(const Tensor&)>;

/// Softmax of an MLP's eval-mode logits.
ProbabilityFn mlp_probability_fn(const TrainedModel& mlp);

enum class BackgroundMode { stratified, ones };

/// stratified: up to `count` training rows, allocated across classes in
/// proportion to their train counts (at least one per present class).
/// ones: a single all-ones row.
Tensor make_background(const Graph& graph, BackgroundMode mode, std::size_t count = 50,
                       std::uint64_t seed = 0);

struct ShapConfig {
    /// B x d rows that absent features are drawn from (values averaged over rows).
    Tensor background;
    /// Coalition budget when sampling; 0 means 2d + 2048.
    std::size_t samples = 0;
    /// Exact enumeration up to this many features.
    std::size_t exact_threshold = 12;
    /// Ridge term added to the weighted normal equations.
    double ridge = 0.0;
    std::uint64_t seed = 0;
    /// Explained class; defaults to the predicted class of each instance.
    std::optional<std::size_t> target;
};

struct FeatureAttribution {
    std::vector<double> phi;
    /// Mean prediction over the background.
    double base_value = 0.0;
    /// Prediction on the instance.
    double prediction = 0.0;
    std::size_t target = 0;
    std::size_t instance = 0;
    bool exact = false;
    /// Distinct coalitions evaluated (empty and full included).
    std::size_t coalitions = 0;
};

/// Exact enumeration for d <= exact_threshold, sampled KernelSHAP otherwise.
FeatureAttribution kernel_shap(const ProbabilityFn& fn, std::span<const double> x, const ShapConfig& cfg,
                               std::size_t instance = 0);
/// Shapley values by enumerating all 2^d coalitions (d <= 24).
FeatureAttribution exact_shapley(const ProbabilityFn& fn, std::span<const double> x, const ShapConfig& cfg,
                                 std::size_t instance = 0);
/// KernelSHAP regression: coalition sizes are fully enumerated while the budget
/// allows and sampled with kernel weights beyond that; efficiency is enforced.
FeatureAttribution sampled_kernel_shap(const ProbabilityFn& fn, std::span<const double> x,
                                       const ShapConfig& cfg, std::size_t instance = 0);

struct GlobalImportance {
    /// Mean |phi| per feature.
    std::vector<double> mean_abs;
    /// Feature ids by descending mean |phi|, lower id first on ties.
    std::vector<std::size_t> ranking;
    std::vector<FeatureAttribution> instances;
};

/// Attributions for every row of `samples`; row i uses seed cfg.seed + i.
GlobalImportance global_importance(const ProbabilityFn& fn, const Tensor& samples, const ShapConfig& cfg,
                                   std::span<const std::size_t> instance_ids = {});

struct StudentSummary {
    std::vector<std::size_t> features;
    FidelityReport fidelity;
    /// Two-class graphs only.
    std::optional<ClassificationMetrics> binary;
    double final_loss = 0.0;
};

struct TopkReport {
    std::size_t k = 0;
    GlobalImportance importance;
    /// Kept columns in ascending id order.
    std::vector<std::size_t> selected;
    StudentSummary all_features;
    StudentSummary top_features;
    TrainedModel all_student;
    /// Trained on the selected columns only.
    TrainedModel top_student;
};

/// Distills an MLP on all features, ranks features by global importance over
/// `explain_nodes`, keeps the top k columns and distills a second MLP on them.
/// Metrics are reported on the test mask.
TopkReport topk_retrain(const TrainedModel& teacher, const Graph& graph, std::size_t k, const KDConfig& kd,
                        const ShapConfig& cfg, std::span<const std::size_t> explain_nodes,
                        std::size_t hidden = 64);

/// Graph with only the listed feature columns.
Graph restrict_features(const Graph& graph, std::span<const std::size_t> columns);

} // namespace pgx
