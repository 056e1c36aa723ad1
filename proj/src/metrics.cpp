#include "pgx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pgx {

double accuracy_percent(const Tensor& logits, std::span<const std::size_t> labels,
                        std::span<const std::size_t> mask) {
    if (mask.empty()) {
        throw Error("accuracy over an empty mask");
    }
    const auto pred = argmax_rows(logits);
    std::size_t ok = 0;
    for (std::size_t r : mask) {
        ok += pred.at(r) == labels[r] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(ok) / static_cast<double>(mask.size());
}

FidelityReport fidelity_from_logits(const Tensor& teacher_logits, const Tensor& student_logits,
                                    std::span<const std::size_t> labels,
                                    std::span<const std::size_t> mask) {
    if (!teacher_logits.same_shape(student_logits)) {
        throw ShapeError("teacher and student logits differ in shape");
    }
    if (mask.empty()) {
        throw Error("fidelity over an empty mask");
    }
    const Tensor t = select_rows(teacher_logits, mask);
    const Tensor s = select_rows(student_logits, mask);
    const auto pt = argmax_rows(t);
    const auto ps = argmax_rows(s);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < pt.size(); ++i) {
        agree += pt[i] == ps[i] ? 1 : 0;
    }
    FidelityReport rep;
    rep.count = mask.size();
    rep.accuracy = accuracy_percent(student_logits, labels, mask);
    rep.agreement = 100.0 * static_cast<double>(agree) / static_cast<double>(mask.size());
    rep.kl = ad::kl_divergence(ad::softmax_with_temperature(t, 1.0), ad::softmax_with_temperature(s, 1.0));
    return rep;
}

FidelityReport evaluate_fidelity(const TrainedModel& teacher, const TrainedModel& student,
                                 const Graph& graph, std::span<const std::size_t> mask) {
    if (teacher.spec.output_dim() != student.spec.output_dim()) {
        throw ShapeError("teacher and student predict different class counts");
    }
    return fidelity_from_logits(forward(teacher, graph), forward(student, graph), graph.labels, mask);
}

double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("scores and labels differ in length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // midranks over tied groups
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                positive_rank_sum += midrank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw Error("AUC is undefined when labels contain a single class");
    }
    const double np = static_cast<double>(positives);
    const double nn = static_cast<double>(negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const std::size_t> labels) {
    ClassificationMetrics m;
    m.auc = roc_auc(scores, labels);
    std::size_t correct = 0;
    std::size_t positives = 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= 0.5;
        const bool truth = labels[i] != 0;
        correct += pred == truth ? 1 : 0;
        positives += truth ? 1 : 0;
        hits += pred && truth ? 1 : 0;
    }
    m.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(scores.size());
    m.recall = 100.0 * static_cast<double>(hits) / static_cast<double>(positives);
    return m;
}

std::vector<double> positive_scores(const Tensor& logits, std::span<const std::size_t> mask) {
    if (logits.cols() != 2) {
        throw ShapeError("binary scores need two-class logits");
    }
    const Tensor p = ad::softmax_with_temperature(select_rows(logits, mask), 1.0);
    std::vector<double> out(p.rows());
    for (std::size_t r = 0; r < p.rows(); ++r) {
        out[r] = p(r, 1);
    }
    return out;
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

} // namespace pgx
