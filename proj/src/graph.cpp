#include "pgx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pgx/error.hpp"

namespace pgx {

const char* to_string(Split s) {
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    case Split::none:
        break;
    }
    return "none";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "none") return Split::none;
    throw FormatError("unknown mask value '" + s + "'");
}

std::vector<std::size_t> Graph::nodes_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> Graph::all_nodes() const {
    std::vector<std::size_t> out(num_nodes);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

void Graph::validate() const {
    if (features.rows() != num_nodes) {
        throw FormatError("feature rows " + std::to_string(features.rows()) +
                          " do not match node count " + std::to_string(num_nodes));
    }
    if (labels.size() != num_nodes) {
        throw FormatError("label count " + std::to_string(labels.size()) +
                          " does not match node count " + std::to_string(num_nodes));
    }
    if (split.size() != num_nodes) {
        throw FormatError("mask count does not match node count");
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
        if (labels[i] >= num_classes) {
            throw FormatError("label " + std::to_string(labels[i]) + " of node " +
                              std::to_string(i) + " is not below num_classes " +
                              std::to_string(num_classes));
        }
    }
    if (adjacency.rows != num_nodes || adjacency.cols != num_nodes) {
        throw FormatError("adjacency shape does not match node count");
    }
    for (std::size_t r = 0; r < num_nodes; ++r) {
        for (std::size_t e = adjacency.row_ptr[r]; e < adjacency.row_ptr[r + 1]; ++e) {
            if (e > adjacency.row_ptr[r] && adjacency.col[e] <= adjacency.col[e - 1]) {
                throw FormatError("adjacency has duplicate or unsorted entries");
            }
            if (!adjacency.find(adjacency.col[e], r)) {
                throw FormatError("adjacency is not symmetric");
            }
        }
    }
    if (!feature_names.empty() && feature_names.size() != features.cols()) {
        throw FormatError("feature name count does not match feature dimension");
    }
}

Graph make_graph(std::size_t num_nodes, std::size_t num_classes,
                 const std::vector<std::pair<std::size_t, std::size_t>>& edges, Tensor features,
                 std::vector<std::size_t> labels, std::vector<Split> split,
                 std::vector<std::string> feature_names) {
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    coords.reserve(edges.size() * 2);
    for (const auto& [u, v] : edges) {
        if (u >= num_nodes || v >= num_nodes) {
            throw FormatError("edge endpoint (" + std::to_string(u) + "," + std::to_string(v) +
                              ") outside node range " + std::to_string(num_nodes));
        }
        coords.emplace_back(u, v);
        if (u != v) {
            coords.emplace_back(v, u);
        }
    }
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    Graph g;
    g.num_nodes = num_nodes;
    g.num_classes = num_classes;
    g.adjacency = CsrMatrix::from_triplets(num_nodes, num_nodes, coords,
                                           std::vector<double>(coords.size(), 1.0));
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.split = split.empty() ? std::vector<Split>(num_nodes, Split::none) : std::move(split);
    g.feature_names = std::move(feature_names);
    g.validate();
    return g;
}

namespace {

std::ifstream open_bundle_file(const std::filesystem::path& dir, const char* name) {
    const auto path = dir / name;
    std::ifstream in(path);
    if (!in) {
        throw FormatError(std::string("missing ") + name + " (" + path.string() + ")");
    }
    return in;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::map<std::string, std::string>& meta, const std::string& key) {
    const auto it = meta.find(key);
    if (it == meta.end()) {
        throw FormatError("meta is missing key '" + key + "'");
    }
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) {
            throw FormatError("meta key '" + key + "' is not an integer");
        }
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw FormatError("meta key '" + key + "' is not an integer");
    }
}

} // namespace

Graph load_graph_bundle(const std::filesystem::path& dir) {
    for (const char* name : {"meta", "edges", "features", "labels", "masks"}) {
        if (!std::filesystem::exists(dir / name)) {
            throw FormatError(std::string("missing ") + name + " (" + (dir / name).string() + ")");
        }
    }

    std::map<std::string, std::string> meta;
    {
        auto in = open_bundle_file(dir, "meta");
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#') {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw FormatError("meta line without '=': " + line);
            }
            meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
    }
    const std::size_t n = parse_count(meta, "num_nodes");
    const std::size_t classes = parse_count(meta, "num_classes");
    const std::size_t dim = parse_count(meta, "feature_dim");
    std::vector<std::string> names;
    if (const auto it = meta.find("feature_names"); it != meta.end() && !it->second.empty()) {
        std::stringstream ss(it->second);
        std::string name;
        while (std::getline(ss, name, ',')) {
            names.push_back(trim(name));
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    {
        auto in = open_bundle_file(dir, "edges");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) {
                continue;
            }
            std::istringstream ls(line);
            long long u = -1;
            long long v = -1;
            std::string extra;
            if (!(ls >> u >> v) || (ls >> extra) || u < 0 || v < 0) {
                throw FormatError("malformed edge endpoint on edges line " + std::to_string(lineno));
            }
            if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
                throw FormatError("malformed edge endpoint on edges line " +
                                  std::to_string(lineno) + ": id outside [0," + std::to_string(n) +
                                  ")");
            }
            edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
        }
    }

    Tensor features(0, dim);
    std::vector<double> fdata;
    std::size_t frows = 0;
    {
        auto in = open_bundle_file(dir, "features");
        std::string line;
        fdata.reserve(n * dim);
        while (std::getline(in, line)) {
            if (trim(line).empty()) {
                continue;
            }
            std::istringstream ls(line);
            std::size_t count = 0;
            double x = 0.0;
            while (ls >> x) {
                fdata.push_back(x);
                ++count;
            }
            if (!ls.eof()) {
                throw FormatError("non-numeric value on features row " + std::to_string(frows));
            }
            if (count != dim) {
                throw FormatError("features row " + std::to_string(frows) + " has " +
                                  std::to_string(count) + " values, expected " +
                                  std::to_string(dim));
            }
            ++frows;
        }
    }
    if (frows != n) {
        throw FormatError("row-count mismatch: features has " + std::to_string(frows) +
                          " rows, expected " + std::to_string(n));
    }
    features = Tensor(n, dim, std::move(fdata));

    std::vector<std::size_t> labels;
    {
        auto in = open_bundle_file(dir, "labels");
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            long long y = -1;
            std::istringstream ls(line);
            if (!(ls >> y) || y < 0) {
                throw FormatError("malformed label '" + line + "'");
            }
            if (static_cast<std::size_t>(y) >= classes) {
                throw FormatError("label index " + std::to_string(y) + " >= num_classes " +
                                  std::to_string(classes));
            }
            labels.push_back(static_cast<std::size_t>(y));
        }
    }
    if (labels.size() != n) {
        throw FormatError("row-count mismatch: labels has " + std::to_string(labels.size()) +
                          " rows, expected " + std::to_string(n));
    }

    std::vector<Split> split;
    {
        auto in = open_bundle_file(dir, "masks");
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            split.push_back(parse_split(line));
        }
    }
    if (split.size() != n) {
        throw FormatError("row-count mismatch: masks has " + std::to_string(split.size()) +
                          " rows, expected " + std::to_string(n));
    }

    return make_graph(n, classes, edges, std::move(features), std::move(labels), std::move(split),
                      std::move(names));
}

void save_graph_bundle(const Graph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "meta");
        out << "num_nodes=" << g.num_nodes << "\n";
        out << "num_classes=" << g.num_classes << "\n";
        out << "feature_dim=" << g.feature_dim() << "\n";
        if (!g.feature_names.empty()) {
            out << "feature_names=";
            for (std::size_t i = 0; i < g.feature_names.size(); ++i) {
                out << (i ? "," : "") << g.feature_names[i];
            }
            out << "\n";
        }
    }
    {
        std::ofstream out(dir / "edges");
        for (std::size_t r = 0; r < g.num_nodes; ++r) {
            for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
                if (g.adjacency.col[e] >= r) {
                    out << r << ' ' << g.adjacency.col[e] << '\n';
                }
            }
        }
    }
    {
        std::ofstream out(dir / "features");
        out.precision(17);
        for (std::size_t r = 0; r < g.num_nodes; ++r) {
            const auto row = g.features.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) {
                out << (j ? " " : "") << row[j];
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels");
        for (std::size_t y : g.labels) {
            out << y << '\n';
        }
    }
    {
        std::ofstream out(dir / "masks");
        for (Split s : g.split) {
            out << to_string(s) << '\n';
        }
    }
    if (!std::filesystem::exists(dir / "masks")) {
        throw Error("failed to write bundle to " + dir.string());
    }
}

void SyntheticSpec::validate() const {
    if (num_blocks == 0 || nodes_per_block == 0) {
        throw Error("synthetic spec is degenerate: zero nodes");
    }
    if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0) {
        throw Error("synthetic spec edge probabilities must lie in [0,1]");
    }
    if (d_informative + d_noise == 0) {
        throw Error("synthetic spec needs at least one feature dimension");
    }
    if (class_separation < 0.0) {
        throw Error("synthetic spec class_separation must be >= 0");
    }
    if (imbalance_ratio && !(*imbalance_ratio >= 1.0)) {
        throw Error("synthetic spec imbalance_ratio must be >= 1");
    }
    if (train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
        throw Error("synthetic spec split fractions must be nonnegative and sum to <= 1");
    }
}

SyntheticSpec citation_style_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.num_blocks = 4;
    s.nodes_per_block = 150;
    s.p_in = 0.04;
    s.p_out = 0.01;
    s.d_informative = 16;
    s.d_noise = 48;
    s.class_separation = 0.6;
    s.train_fraction = 0.2;
    s.val_fraction = 0.2;
    s.seed = seed;
    return s;
}

Graph generate_synthetic_graph(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::size_t> block_sizes(spec.num_blocks, spec.nodes_per_block);
    if (spec.imbalance_ratio) {
        for (std::size_t b = 1; b < spec.num_blocks; ++b) {
            block_sizes[b] = std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::llround(static_cast<double>(spec.nodes_per_block) / *spec.imbalance_ratio)));
        }
    }
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < spec.num_blocks; ++b) {
        labels.insert(labels.end(), block_sizes[b], b);
    }
    const std::size_t n = labels.size();

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? spec.p_in : spec.p_out;
            if (uniform(rng) < p) {
                edges.emplace_back(i, j);
            }
        }
    }

    const std::size_t d = spec.d_informative + spec.d_noise;
    Tensor centroids(spec.num_blocks, spec.d_informative);
    for (double& c : centroids.data()) {
        c = normal(rng);
    }
    // standardize each column across classes so every informative dimension
    // separates the classes by the same scale
    if (spec.num_blocks > 1) {
        const auto k = static_cast<double>(spec.num_blocks);
        for (std::size_t j = 0; j < spec.d_informative; ++j) {
            double mean = 0.0;
            for (std::size_t b = 0; b < spec.num_blocks; ++b) mean += centroids(b, j);
            mean /= k;
            double var = 0.0;
            for (std::size_t b = 0; b < spec.num_blocks; ++b) {
                var += (centroids(b, j) - mean) * (centroids(b, j) - mean);
            }
            const double sd = std::sqrt(var / k);
            for (std::size_t b = 0; b < spec.num_blocks; ++b) {
                centroids(b, j) = sd > 0.0 ? spec.class_separation * (centroids(b, j) - mean) / sd : 0.0;
            }
        }
    } else {
        centroids.fill(0.0);
    }
    Tensor raw(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < spec.d_informative; ++j) {
            raw(i, j) = centroids(labels[i], j) + normal(rng);
        }
        for (std::size_t j = spec.d_informative; j < d; ++j) {
            raw(i, j) = normal(rng);
        }
    }
    std::vector<std::size_t> column_order(d);
    std::iota(column_order.begin(), column_order.end(), std::size_t{0});
    if (spec.shuffle_columns) {
        std::shuffle(column_order.begin(), column_order.end(), rng);
    }
    Tensor features = select_columns(raw, column_order);
    std::vector<std::string> names;
    for (std::size_t src : column_order) {
        names.push_back(src < spec.d_informative
                            ? "inf" + std::to_string(src)
                            : "noise" + std::to_string(src - spec.d_informative));
    }

    // Stratified split, at least one training node per class.
    std::vector<Split> split(n, Split::test);
    for (std::size_t b = 0; b < spec.num_blocks; ++b) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == b) {
                members.push_back(i);
            }
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto count = static_cast<double>(members.size());
        const std::size_t n_train = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(spec.train_fraction * count)));
        const std::size_t n_val =
            std::min(members.size() - std::min(members.size(), n_train),
                     static_cast<std::size_t>(std::llround(spec.val_fraction * count)));
        for (std::size_t k = 0; k < members.size(); ++k) {
            split[members[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
        }
    }

    return make_graph(n, spec.num_blocks, edges, std::move(features), std::move(labels),
                      std::move(split), std::move(names));
}

CsrMatrix with_self_loops(const CsrMatrix& adjacency) {
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    coords.reserve(adjacency.nnz() + adjacency.rows);
    for (std::size_t r = 0; r < adjacency.rows; ++r) {
        bool has_loop = false;
        for (std::size_t e = adjacency.row_ptr[r]; e < adjacency.row_ptr[r + 1]; ++e) {
            coords.emplace_back(r, adjacency.col[e]);
            has_loop = has_loop || adjacency.col[e] == r;
        }
        if (!has_loop) {
            coords.emplace_back(r, r);
        }
    }
    return CsrMatrix::from_triplets(adjacency.rows, adjacency.cols, coords,
                                    std::vector<double>(coords.size(), 1.0));
}

CsrMatrix normalize_adjacency(const Graph& g, Normalization mode) {
    CsrMatrix a = with_self_loops(g.adjacency);
    const std::vector<double> deg = row_sums(a);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
            if (mode == Normalization::row) {
                a.val[e] = 1.0 / deg[r];
            } else {
                a.val[e] = 1.0 / std::sqrt(deg[r] * deg[a.col[e]]);
            }
        }
    }
    return a;
}

Graph make_reference_graph(const Graph& g) {
    Graph ref = g;
    CsrMatrix loops;
    loops.rows = g.num_nodes;
    loops.cols = g.num_nodes;
    loops.row_ptr.resize(g.num_nodes + 1);
    loops.col.resize(g.num_nodes);
    loops.val.assign(g.num_nodes, 1.0);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        loops.row_ptr[i + 1] = i + 1;
        loops.col[i] = i;
    }
    ref.adjacency = std::move(loops);
    return ref;
}

std::string FeatureReference::describe() const {
    switch (mode) {
    case FeatureReferenceMode::ones:
        return "ones";
    case FeatureReferenceMode::mean:
        return "mean";
    case FeatureReferenceMode::constant: {
        std::ostringstream os;
        os.precision(17);
        os << "constant(" << value << ")";
        return os.str();
    }
    }
    return "ones";
}

FeatureReference FeatureReference::parse(const std::string& text) {
    if (text == "ones") {
        return {FeatureReferenceMode::ones, 1.0};
    }
    if (text == "mean") {
        return {FeatureReferenceMode::mean, 0.0};
    }
    const std::string prefix = "constant(";
    if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
        try {
            return {FeatureReferenceMode::constant,
                    std::stod(text.substr(prefix.size(), text.size() - prefix.size() - 1))};
        } catch (const std::logic_error&) {
        }
    }
    if (text.rfind("constant:", 0) == 0) {
        try {
            return {FeatureReferenceMode::constant, std::stod(text.substr(9))};
        } catch (const std::logic_error&) {
        }
    }
    throw Error("unknown feature reference '" + text + "' (expected ones, mean or constant(v))");
}

Tensor make_reference_features(const Graph& g, const FeatureReference& ref) {
    const Tensor& x = g.features;
    switch (ref.mode) {
    case FeatureReferenceMode::ones:
        return Tensor(x.rows(), x.cols(), 1.0);
    case FeatureReferenceMode::constant:
        return Tensor(x.rows(), x.cols(), ref.value);
    case FeatureReferenceMode::mean: {
        std::vector<double> mean(x.cols(), 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) {
                mean[j] += x(i, j);
            }
        }
        for (double& m : mean) {
            m /= static_cast<double>(std::max<std::size_t>(1, x.rows()));
        }
        Tensor out(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            std::copy(mean.begin(), mean.end(), out.row(i).begin());
        }
        return out;
    }
    }
    throw Error("unknown feature reference mode");
}

bool Subgraph::contains(std::size_t v) const {
    return std::find(nodes.begin(), nodes.end(), v) != nodes.end();
}

std::optional<std::size_t> Subgraph::hop_of(std::size_t v) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] == v) {
            return hops[i];
        }
    }
    return std::nullopt;
}

Subgraph khop_subgraph(const Graph& g, std::size_t root, std::size_t k) {
    if (root >= g.num_nodes) {
        throw Error("khop_subgraph: root " + std::to_string(root) + " out of range");
    }
    constexpr std::size_t unseen = static_cast<std::size_t>(-1);
    std::vector<std::size_t> dist(g.num_nodes, unseen);
    std::deque<std::size_t> queue{root};
    dist[root] = 0;
    std::vector<std::size_t> visited{root};
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (dist[u] == k) {
            continue;
        }
        for (std::size_t e = g.adjacency.row_ptr[u]; e < g.adjacency.row_ptr[u + 1]; ++e) {
            const std::size_t v = g.adjacency.col[e];
            if (dist[v] == unseen) {
                dist[v] = dist[u] + 1;
                visited.push_back(v);
                queue.push_back(v);
            }
        }
    }
    std::sort(visited.begin(), visited.end(), [&](std::size_t a, std::size_t b) {
        return std::pair{dist[a], a} < std::pair{dist[b], b};
    });

    Subgraph s;
    s.root = root;
    s.nodes = visited;
    for (std::size_t v : visited) {
        s.hops.push_back(dist[v]);
    }
    std::vector<std::size_t> sorted_ids = visited;
    std::sort(sorted_ids.begin(), sorted_ids.end());
    for (std::size_t u : sorted_ids) {
        for (std::size_t e = g.adjacency.row_ptr[u]; e < g.adjacency.row_ptr[u + 1]; ++e) {
            const std::size_t v = g.adjacency.col[e];
            if (dist[v] != unseen) {
                s.edges.emplace_back(u, v);
            }
        }
    }
    return s;
}

std::vector<std::size_t> oversample_minority(const std::vector<std::size_t>& labels,
                                             const std::vector<std::size_t>& train_indices,
                                             std::uint64_t seed) {
    if (train_indices.empty()) {
        throw Error("oversample_minority: empty training set");
    }
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i : train_indices) {
        if (i >= labels.size()) {
            throw Error("oversample_minority: index out of range");
        }
        by_class[labels[i]].push_back(i);
    }
    std::size_t majority = 0;
    for (const auto& [c, members] : by_class) {
        majority = std::max(majority, members.size());
    }
    std::vector<std::size_t> out = train_indices;
    std::mt19937_64 rng(seed);
    for (const auto& [c, members] : by_class) {
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (std::size_t k = members.size(); k < majority; ++k) {
            out.push_back(members[pick(rng)]);
        }
    }
    return out;
}

std::vector<double> balanced_class_weights(const std::vector<std::size_t>& labels,
                                           const std::vector<std::size_t>& indices,
                                           std::size_t num_classes) {
    std::vector<double> counts(num_classes, 0.0);
    for (std::size_t i : indices) {
        counts.at(labels.at(i)) += 1.0;
    }
    std::vector<double> w(num_classes, 0.0);
    const double n = static_cast<double>(indices.size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] > 0.0) {
            w[c] = n / (static_cast<double>(num_classes) * counts[c]);
        }
    }
    return w;
}

} // namespace pgx
