#include <doctest.h>

#include <cmath>
#include <random>

#include "pgx/metrics.hpp"

using namespace pgx;

namespace {

/// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
double pairwise_auc(const std::vector<double>& s, const std::vector<std::size_t>& y) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                den += 1.0;
                num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return num / den;
}

} // namespace

TEST_CASE("AUC closed cases") {
    const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    const std::vector<std::size_t> y{0, 0, 1, 1};
    CHECK(roc_auc(s, y) == 1.0);
    const std::vector<std::size_t> flipped{1, 1, 0, 0};
    CHECK(roc_auc(s, flipped) == 0.0);
    const std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
    CHECK(roc_auc(tied, y) == 0.5);
    const std::vector<std::size_t> one_class{1, 1, 1, 1};
    CHECK_THROWS_WITH(roc_auc(s, one_class), doctest::Contains("single class"));
}

TEST_CASE("AUC matches the pairwise definition with ties and is monotone-invariant") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> level(0, 9);
    std::bernoulli_distribution coin(0.4);
    std::vector<double> s;
    std::vector<std::size_t> y;
    for (int i = 0; i < 300; ++i) {
        y.push_back(coin(rng) ? 1 : 0);
        s.push_back(0.1 * level(rng) + 0.05 * static_cast<double>(y.back()));
    }
    const double a = roc_auc(s, y);
    CHECK(a == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));
    std::vector<double> t;
    for (double v : s) {
        t.push_back(std::exp(3.0 * v) - 7.0);
    }
    CHECK(roc_auc(t, y) == a);
}

TEST_CASE("uninformative scores give AUC near one half") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> s;
    std::vector<std::size_t> y;
    for (int i = 0; i < 10000; ++i) {
        s.push_back(u(rng));
        y.push_back(coin(rng) ? 1 : 0);
    }
    // standard error is about 0.0058 at n = 10000
    CHECK(std::abs(roc_auc(s, y) - 0.5) < 0.02);
}

TEST_CASE("recall and accuracy at threshold one half") {
    const std::vector<double> s{0.9, 0.6, 0.7, 0.2};
    const std::vector<std::size_t> y{1, 1, 0, 0};
    const ClassificationMetrics m = classification_metrics(s, y);
    CHECK(m.recall == 100.0);
    CHECK(m.accuracy == 75.0);
    const std::vector<double> all_pos{0.9, 0.9, 0.9, 0.9};
    CHECK(classification_metrics(all_pos, y).recall == 100.0);
    const std::vector<double> low{0.1, 0.9, 0.1, 0.1};
    CHECK(classification_metrics(low, y).recall == 50.0);
}

TEST_CASE("fidelity from logits") {
    const Tensor t = Tensor::from_rows({{2, 0}, {0, 2}, {1, 0}, {0, 3}});
    const Tensor s = Tensor::from_rows({{1, 0}, {0, 1}, {0, 1}, {0, 1}});
    const std::vector<std::size_t> labels{0, 1, 1, 1};
    const std::vector<std::size_t> mask{0, 1, 2, 3};
    const FidelityReport same = fidelity_from_logits(t, t, labels, mask);
    CHECK(same.agreement == 100.0);
    CHECK(same.kl == 0.0);
    const FidelityReport r = fidelity_from_logits(t, s, labels, mask);
    CHECK(r.agreement == 75.0);
    CHECK(r.accuracy == 100.0);
    CHECK(r.count == 4);
    const FidelityReport swapped = fidelity_from_logits(s, t, labels, mask);
    CHECK(swapped.agreement == r.agreement);
    CHECK(swapped.kl != r.kl);
    CHECK(r.kl > 0.0);
    CHECK_THROWS(fidelity_from_logits(t, Tensor(4, 3), labels, mask));
    CHECK_THROWS(fidelity_from_logits(t, s, labels, {}));
}

TEST_CASE("model fidelity against itself") {
    SyntheticSpec spec;
    spec.nodes_per_block = 10;
    const Graph g = generate_synthetic_graph(spec);
    const TrainedModel m = init_model(default_model_spec(Architecture::gcn, g.feature_dim(), 2, 8), g, 0);
    const FidelityReport r = evaluate_fidelity(m, m, g, g.all_nodes());
    CHECK(r.agreement == 100.0);
    CHECK(r.kl == 0.0);
}

TEST_CASE("one decimal rounding") {
    CHECK(round1(83.26) == doctest::Approx(83.3));
    CHECK(round1(99.94) == doctest::Approx(99.9));
}
