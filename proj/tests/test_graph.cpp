#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <set>

#include "pgx/graph.hpp"

using namespace pgx;
namespace fs = std::filesystem;

namespace {

const fs::path fixture = fs::path(PGX_FIXTURE_DIR) / "five_node";

fs::path scratch_copy(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("pgx_graph_" + name);
    fs::remove_all(dir);
    fs::copy(fixture, dir);
    return dir;
}

void overwrite(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

Graph chain(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> e;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        e.push_back({i, i + 1});
    }
    return make_graph(n, 1, e, Tensor(n, 2, 1.0), std::vector<std::size_t>(n, 0));
}

} // namespace

TEST_CASE("five node bundle loads with symmetric closure") {
    const Graph g = load_graph_bundle(fixture);
    CHECK(g.num_nodes == 5);
    CHECK(g.num_classes == 2);
    CHECK(g.feature_dim() == 3);
    // 0-1, 1-2, 2-0, 3-4 with the repeated 1-0 dropped
    CHECK(g.num_edges() == 8);
    for (std::size_t r = 0; r < g.num_nodes; ++r) {
        for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
            CHECK(g.adjacency.find(g.adjacency.col[e], r).has_value());
            CHECK(g.adjacency.val[e] == 1.0);
        }
    }
    CHECK(g.labels == std::vector<std::size_t>{0, 0, 0, 1, 1});
    CHECK(g.nodes_in(Split::train) == std::vector<std::size_t>{0, 1, 3});
    CHECK(g.nodes_in(Split::test) == std::vector<std::size_t>{4});
    CHECK(g.feature_names == std::vector<std::string>{"a", "b", "c"});
    CHECK(g.features(4, 1) == 0.5);
}

TEST_CASE("bundle errors are specific") {
    SUBCASE("missing labels") {
        const fs::path d = scratch_copy("nolabels");
        fs::remove(d / "labels");
        CHECK_THROWS_WITH(load_graph_bundle(d), doctest::Contains("missing labels"));
    }
    SUBCASE("row count mismatch") {
        const fs::path d = scratch_copy("rows");
        overwrite(d / "labels", "0\n0\n1\n1\n");
        CHECK_THROWS_WITH(load_graph_bundle(d), doctest::Contains("row-count mismatch"));
    }
    SUBCASE("label out of range") {
        const fs::path d = scratch_copy("label");
        overwrite(d / "labels", "0\n0\n2\n1\n1\n");
        CHECK_THROWS_WITH(load_graph_bundle(d), doctest::Contains(">= num_classes"));
    }
    SUBCASE("malformed edge") {
        const fs::path d = scratch_copy("edge");
        overwrite(d / "edges", "0 1\n1 x\n");
        CHECK_THROWS_WITH(load_graph_bundle(d), doctest::Contains("malformed edge endpoint"));
        overwrite(d / "edges", "0 9\n");
        CHECK_THROWS_WITH(load_graph_bundle(d), doctest::Contains("malformed edge endpoint"));
    }
}

TEST_CASE("bundle round trip is exact") {
    SyntheticSpec spec;
    spec.seed = 5;
    const Graph g = generate_synthetic_graph(spec);
    const fs::path d = fs::temp_directory_path() / "pgx_graph_roundtrip";
    fs::remove_all(d);
    save_graph_bundle(g, d);
    const Graph h = load_graph_bundle(d);
    CHECK(h.adjacency == g.adjacency);
    CHECK(h.features == g.features);
    CHECK(h.labels == g.labels);
    CHECK(h.split == g.split);
    CHECK(h.feature_names == g.feature_names);
}

TEST_CASE("synthetic generator contracts") {
    SUBCASE("two disjoint cliques") {
        SyntheticSpec s;
        s.nodes_per_block = 6;
        s.p_in = 1.0;
        s.p_out = 0.0;
        const Graph g = generate_synthetic_graph(s);
        CHECK(g.num_edges() == 2 * 6 * 5);
        for (std::size_t r = 0; r < g.num_nodes; ++r) {
            for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
                CHECK(g.labels[r] == g.labels[g.adjacency.col[e]]);
            }
        }
    }
    SUBCASE("balanced labels") {
        SyntheticSpec s;
        s.num_blocks = 3;
        s.nodes_per_block = 100;
        const Graph g = generate_synthetic_graph(s);
        CHECK(g.num_nodes == 300);
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t y : g.labels) {
            ++counts[y];
        }
        CHECK(counts.size() == 3);
        for (const auto& [c, n] : counts) {
            CHECK(n == 100);
        }
    }
    SUBCASE("cross-block edge count within four sigma of the binomial mean") {
        SyntheticSpec s;
        s.nodes_per_block = 200;
        s.p_in = 0.1;
        s.p_out = 0.01;
        s.seed = 77;
        const Graph g = generate_synthetic_graph(s);
        std::size_t cross = 0;
        for (std::size_t r = 0; r < g.num_nodes; ++r) {
            for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
                cross += g.labels[r] != g.labels[g.adjacency.col[e]] ? 1 : 0;
            }
        }
        cross /= 2;
        const double trials = 200.0 * 200.0;
        const double mean = trials * 0.01;
        const double sigma = std::sqrt(trials * 0.01 * 0.99);
        CHECK(std::abs(static_cast<double>(cross) - mean) < 4.0 * sigma);
    }
    SUBCASE("bit reproducible and seed sensitive") {
        SyntheticSpec s;
        s.seed = 3;
        const Graph a = generate_synthetic_graph(s);
        const Graph b = generate_synthetic_graph(s);
        CHECK(a.adjacency == b.adjacency);
        CHECK(a.features == b.features);
        CHECK(a.split == b.split);
        s.seed = 4;
        CHECK_FALSE(generate_synthetic_graph(s).features == a.features);
    }
    SUBCASE("imbalance and degenerate specs") {
        SyntheticSpec s;
        s.nodes_per_block = 90;
        s.imbalance_ratio = 9.0;
        const Graph g = generate_synthetic_graph(s);
        CHECK(g.num_nodes == 100);
        s.nodes_per_block = 0;
        s.imbalance_ratio.reset();
        CHECK_THROWS_WITH(generate_synthetic_graph(s), doctest::Contains("zero nodes"));
        SyntheticSpec p;
        p.p_in = 1.5;
        CHECK_THROWS(generate_synthetic_graph(p));
    }
    SUBCASE("masks are disjoint and every class has a train node") {
        SyntheticSpec s;
        s.num_blocks = 4;
        s.nodes_per_block = 10;
        const Graph g = generate_synthetic_graph(s);
        std::set<std::size_t> train_classes;
        for (std::size_t v : g.nodes_in(Split::train)) {
            train_classes.insert(g.labels[v]);
        }
        CHECK(train_classes.size() == 4);
        CHECK(g.split.size() == g.num_nodes);
    }
}

TEST_CASE("normalization hand values") {
    const Graph one = make_graph(1, 1, {}, Tensor(1, 1, 1.0), {0});
    CHECK(normalize_adjacency(one, Normalization::sym).to_dense() == Tensor::from_rows({{1.0}}));

    const Graph two = make_graph(2, 1, {{0, 1}}, Tensor(2, 1, 1.0), {0, 0});
    const Tensor s = normalize_adjacency(two, Normalization::sym).to_dense();
    for (double v : s.data()) {
        CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    }

    SyntheticSpec spec;
    spec.seed = 9;
    const Graph g = generate_synthetic_graph(spec);
    const CsrMatrix row = normalize_adjacency(g, Normalization::row);
    for (double sum : row_sums(row)) {
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    const CsrMatrix sym = normalize_adjacency(g, Normalization::sym);
    for (std::size_t r = 0; r < sym.rows; ++r) {
        for (std::size_t e = sym.row_ptr[r]; e < sym.row_ptr[r + 1]; ++e) {
            CHECK(std::abs(sym.val[e] - sym.at(sym.col[e], r)) < 1e-12);
        }
    }
}

TEST_CASE("self loops are unioned, never doubled") {
    const Graph g = make_graph(3, 1, {{0, 0}, {0, 1}}, Tensor(3, 1, 1.0), {0, 0, 0});
    const CsrMatrix s = with_self_loops(g.adjacency);
    CHECK(s.nnz() == 5);
    CHECK(s.at(0, 0) == 1.0);
}

TEST_CASE("reference graph") {
    const Graph g = load_graph_bundle(fixture);
    const Graph r = make_reference_graph(g);
    CHECK(r.num_edges() == r.num_nodes);
    for (std::size_t v = 0; v < r.num_nodes; ++v) {
        CHECK(r.adjacency.at(v, v) == 1.0);
    }
    CHECK(r.features == g.features);
    CHECK(r.labels == g.labels);
    const Graph rr = make_reference_graph(r);
    CHECK(rr.adjacency == r.adjacency);
}

TEST_CASE("reference features") {
    const Graph g = make_graph(2, 1, {}, Tensor::from_rows({{0, 2}, {2, 0}}), {0, 0});
    CHECK(make_reference_features(g) == Tensor(2, 2, 1.0));
    CHECK(make_reference_features(g, {FeatureReferenceMode::mean, 0.0}) == Tensor(2, 2, 1.0));
    CHECK(make_reference_features(g, {FeatureReferenceMode::constant, 0.25}) == Tensor(2, 2, 0.25));
    const FeatureReference parsed = FeatureReference::parse("constant:0.5");
    CHECK(parsed.mode == FeatureReferenceMode::constant);
    CHECK(parsed.value == 0.5);
    CHECK(FeatureReference::parse(parsed.describe()).value == 0.5);
    CHECK(FeatureReference::parse("mean").mode == FeatureReferenceMode::mean);
    CHECK_THROWS(FeatureReference::parse("zeros?"));
}

TEST_CASE("k-hop subgraph") {
    const Graph c = chain(3);
    CHECK(khop_subgraph(c, 0, 0).nodes == std::vector<std::size_t>{0});
    const Subgraph s1 = khop_subgraph(c, 0, 1);
    CHECK(s1.nodes == std::vector<std::size_t>{0, 1});
    CHECK(s1.hop_of(1) == 1);
    CHECK_FALSE(s1.contains(2));
    CHECK_THROWS(khop_subgraph(c, 3, 1));

    // large k covers exactly the connected component, checked against a plain BFS
    const Graph g = load_graph_bundle(fixture);
    for (std::size_t root = 0; root < g.num_nodes; ++root) {
        std::set<std::size_t> seen{root};
        std::queue<std::size_t> q;
        q.push(root);
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            for (std::size_t e = g.adjacency.row_ptr[u]; e < g.adjacency.row_ptr[u + 1]; ++e) {
                if (seen.insert(g.adjacency.col[e]).second) {
                    q.push(g.adjacency.col[e]);
                }
            }
        }
        const Subgraph s = khop_subgraph(g, root, 10);
        CHECK(std::set<std::size_t>(s.nodes.begin(), s.nodes.end()) == seen);
        for (const auto& [u, v] : s.edges) {
            CHECK(s.contains(u));
            CHECK(s.contains(v));
        }
    }
}

TEST_CASE("oversampling") {
    const std::vector<std::size_t> labels{0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 1};
    const std::vector<std::size_t> balanced_idx{0, 1, 2, 3};
    CHECK(oversample_minority(labels, balanced_idx, 1) == balanced_idx);

    std::vector<std::size_t> train;
    std::vector<std::size_t> big_labels;
    for (std::size_t i = 0; i < 100; ++i) {
        big_labels.push_back(i < 90 ? 0 : 1);
        train.push_back(i);
    }
    const auto out = oversample_minority(big_labels, train, 5);
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t i : out) {
        ++counts[big_labels[i]];
    }
    CHECK(counts[0] == 90);
    CHECK(counts[1] == 90);
    CHECK(std::equal(train.begin(), train.end(), out.begin()));
    CHECK(oversample_minority(big_labels, train, 5) == out);
    CHECK_THROWS(oversample_minority(big_labels, {}, 5));
}

TEST_CASE("balanced class weights") {
    const std::vector<std::size_t> labels{0, 0, 0, 1};
    const auto w = balanced_class_weights(labels, {0, 1, 2, 3}, 3);
    CHECK(w[0] == doctest::Approx(4.0 / 9.0));
    CHECK(w[1] == doctest::Approx(4.0 / 3.0));
    CHECK(w[2] == 0.0);
}
