#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pgx/models.hpp"

namespace pgx {

struct FidelityReport {
    /// Student accuracy against labels, percent.
    double accuracy = 0.0;
    /// Percent of nodes where student and teacher argmax agree.
    double agreement = 0.0;
    /// Mean KL(teacher || student) at temperature 1, nats.
    double kl = 0.0;
    std::optional<double> delta_acc;
    std::size_t count = 0;
};

FidelityReport evaluate_fidelity(const TrainedModel& teacher, const TrainedModel& student,
                                 const Graph& graph, std::span<const std::size_t> mask);
/// Same metrics from precomputed logits (for students on derived feature sets).
FidelityReport fidelity_from_logits(const Tensor& teacher_logits, const Tensor& student_logits,
                                    std::span<const std::size_t> labels,
                                    std::span<const std::size_t> mask);

/// Percent of `mask` rows whose argmax equals the label.
double accuracy_percent(const Tensor& logits, std::span<const std::size_t> labels,
                        std::span<const std::size_t> mask);

struct ClassificationMetrics {
    double accuracy = 0.0;  // percent, threshold 0.5
    double auc = 0.0;       // in [0, 1]
    double recall = 0.0;    // percent of positives with score >= 0.5
};

/// Binary metrics from positive-class probabilities. Throws when only one class is present.
ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const std::size_t> labels);

/// Tie-aware Mann-Whitney estimate of ROC-AUC.
double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels);

/// Positive-class (column 1) probability of every `mask` row.
std::vector<double> positive_scores(const Tensor& logits, std::span<const std::size_t> mask);

/// One decimal, as the report tables print percentages.
double round1(double v);

} // namespace pgx
