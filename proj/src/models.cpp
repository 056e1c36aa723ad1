#include "pgx/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pgx {

const char* to_string(Architecture a) {
    switch (a) {
    case Architecture::mlp:
        return "mlp";
    case Architecture::gcn:
        return "gcn";
    case Architecture::gat:
        return "gat";
    case Architecture::sgat:
        return "sgat";
    case Architecture::appnp:
        return "appnp";
    case Architecture::graphsage:
        return "graphsage";
    case Architecture::gcn_lpa:
        return "gcn_lpa";
    }
    return "unknown";
}

Architecture parse_architecture(const std::string& s) {
    for (Architecture a : {Architecture::mlp, Architecture::gcn, Architecture::gat,
                           Architecture::sgat, Architecture::appnp, Architecture::graphsage,
                           Architecture::gcn_lpa}) {
        if (s == to_string(a)) {
            return a;
        }
    }
    if (s == "sage") return Architecture::graphsage;
    if (s == "gcn-lpa") return Architecture::gcn_lpa;
    throw Error("unknown architecture '" + s + "'");
}

bool has_interaction_structure(Architecture a) {
    return a == Architecture::sgat || a == Architecture::gcn_lpa;
}

Activation ModelSpec::resolved_activation() const {
    if (activation) {
        return *activation;
    }
    return arch == Architecture::gat || arch == Architecture::sgat ? Activation::elu
                                                                    : Activation::relu;
}

void ModelSpec::validate() const {
    if (layer_sizes.size() < 2) {
        throw Error("model spec needs at least one layer (input and output sizes)");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) {
            throw Error("model spec layer sizes must be positive");
        }
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw Error("model spec dropout must lie in [0, 1)");
    }
    if (arch == Architecture::gat) {
        if (heads == 0 || output_heads == 0) {
            throw Error("GAT needs at least one head per layer");
        }
        for (std::size_t l = 1; l + 1 < layer_sizes.size(); ++l) {
            if (layer_sizes[l] % heads != 0) {
                throw Error("GAT hidden size " + std::to_string(layer_sizes[l]) +
                            " is not divisible by " + std::to_string(heads) + " heads");
            }
        }
    }
    if (arch == Architecture::appnp && (teleport < 0.0 || teleport > 1.0)) {
        throw Error("APPNP teleport must lie in [0, 1]");
    }
}

std::string ModelSpec::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "arch=" << to_string(arch) << "\n";
    os << "layer_sizes=";
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
        os << (i ? "," : "") << layer_sizes[i];
    }
    os << "\n";
    os << "heads=" << heads << "\n";
    os << "output_heads=" << output_heads << "\n";
    os << "propagation_steps=" << propagation_steps << "\n";
    os << "teleport=" << teleport << "\n";
    os << "lpa_iterations=" << lpa_iterations << "\n";
    os << "lpa_weight=" << lpa_weight << "\n";
    os << "dropout=" << dropout << "\n";
    os << "attention_slope=" << attention_slope << "\n";
    if (activation) {
        os << "activation=" << (*activation == Activation::elu ? "elu" : "relu") << "\n";
    }
    return os.str();
}

ModelSpec ModelSpec::deserialize(const std::string& text) {
    ModelSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("model spec line without '=': " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "arch") {
                spec.arch = parse_architecture(value);
            } else if (key == "layer_sizes") {
                spec.layer_sizes.clear();
                std::stringstream ss(value);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    spec.layer_sizes.push_back(std::stoull(item));
                }
            } else if (key == "heads") {
                spec.heads = std::stoull(value);
            } else if (key == "output_heads") {
                spec.output_heads = std::stoull(value);
            } else if (key == "propagation_steps") {
                spec.propagation_steps = std::stoull(value);
            } else if (key == "teleport") {
                spec.teleport = std::stod(value);
            } else if (key == "lpa_iterations") {
                spec.lpa_iterations = std::stoull(value);
            } else if (key == "lpa_weight") {
                spec.lpa_weight = std::stod(value);
            } else if (key == "dropout") {
                spec.dropout = std::stod(value);
            } else if (key == "attention_slope") {
                spec.attention_slope = std::stod(value);
            } else if (key == "activation") {
                spec.activation = value == "elu" ? Activation::elu : Activation::relu;
            } else {
                throw FormatError("unknown model spec key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw FormatError("bad value for model spec key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

ModelSpec default_model_spec(Architecture arch, std::size_t input_dim, std::size_t num_classes,
                             std::size_t hidden) {
    ModelSpec spec;
    spec.arch = arch;
    spec.layer_sizes = {input_dim, hidden, num_classes};
    return spec;
}

std::vector<double> TrainingLog::loss_curve() const {
    std::vector<double> out;
    out.reserve(epochs.size());
    for (const EpochRecord& e : epochs) {
        out.push_back(e.total);
    }
    return out;
}

double TrainingLog::final_loss() const {
    if (epochs.empty()) {
        throw Error("training log is empty");
    }
    return epochs.back().total;
}

const Tensor& TrainedModel::param(const std::string& name) const {
    for (const Parameter& p : params) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw Error("model has no parameter '" + name + "'");
}

Tensor& TrainedModel::param(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).param(name));
}

std::vector<Tensor> TrainedModel::param_values() const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Parameter& p : params) {
        out.push_back(p.value);
    }
    return out;
}

void TrainedModel::set_param_values(std::vector<Tensor> values) {
    if (values.size() != params.size()) {
        throw ShapeError("set_param_values: parameter count mismatch");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        require_same_shape(params[i].value, values[i], "set_param_values");
        params[i].value = std::move(values[i]);
    }
}

GraphOperators GraphOperators::build(const Graph& g) {
    GraphOperators ops;
    ops.sym = normalize_adjacency(g, Normalization::sym);
    ops.attention = with_self_loops(g.adjacency);

    CsrMatrix mean;
    mean.rows = g.num_nodes;
    mean.cols = g.num_nodes;
    mean.row_ptr.assign(g.num_nodes + 1, 0);
    for (std::size_t r = 0; r < g.num_nodes; ++r) {
        std::size_t degree = 0;
        for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
            degree += g.adjacency.col[e] != r ? 1 : 0;
        }
        for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
            if (g.adjacency.col[e] != r) {
                mean.col.push_back(g.adjacency.col[e]);
                mean.val.push_back(1.0 / static_cast<double>(degree));
            }
        }
        mean.row_ptr[r + 1] = mean.col.size();
    }
    ops.mean_neighbors = std::move(mean);
    return ops;
}

namespace {

struct ParamCursor {
    std::span<const ad::Var> vars;
    const std::vector<Parameter>& params;
    ad::Var get(const std::string& name) const {
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].name == name) {
                return vars[i];
            }
        }
        throw Error("model has no parameter '" + name + "'");
    }
};

std::string layer_name(std::size_t l, const char* what) {
    return "l" + std::to_string(l) + "." + what;
}

std::string head_name(std::size_t l, std::size_t h, const char* what) {
    return "l" + std::to_string(l) + ".h" + std::to_string(h) + "." + what;
}

ad::Var activate(ad::Var x, Activation a) {
    return a == Activation::elu ? ad::elu(x) : ad::relu(x);
}

class DropoutStream {
public:
    DropoutStream(const ForwardOptions& o, double p) : options_(o), p_(p) {}
    ad::Var apply(ad::Var x) {
        const std::uint64_t s = options_.dropout_seed ^ (0x9e3779b97f4a7c15ULL * ++calls_);
        return options_.train && p_ > 0.0 ? ad::dropout(x, p_, s) : x;
    }

private:
    const ForwardOptions& options_;
    double p_;
    std::uint64_t calls_ = 0;
};

bool same_pattern(const CsrMatrix& a, const CsrMatrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.row_ptr == b.row_ptr && a.col == b.col;
}

ad::Var fixed_interaction(ad::Tape& tape, const GraphOperators& ops, const CsrMatrix& coeffs) {
    if (!same_pattern(ops.attention, coeffs)) {
        throw ShapeError("fixed coefficients must share the adjacency-plus-self-loop pattern");
    }
    return tape.constant(Tensor(coeffs.nnz(), 1, coeffs.val));
}

/// Edge logits of a GCN-LPA model mapped onto the pattern of the current graph.
/// Edges unseen during training get logit 0.
ad::Var lpa_edge_logits(const TrainedModel& model, const GraphOperators& ops, ad::Var logits) {
    const CsrMatrix& trained = model.edge_pattern;
    if (same_pattern(trained, ops.attention)) {
        return logits;
    }
    std::vector<std::ptrdiff_t> index(ops.attention.nnz(), -1);
    for (std::size_t r = 0; r < ops.attention.rows; ++r) {
        for (std::size_t e = ops.attention.row_ptr[r]; e < ops.attention.row_ptr[r + 1]; ++e) {
            if (r < trained.rows && ops.attention.col[e] < trained.cols) {
                if (const auto k = trained.find(r, ops.attention.col[e])) {
                    index[e] = static_cast<std::ptrdiff_t>(*k);
                }
            }
        }
    }
    return ad::gather_rows(logits, index);
}

} // namespace

ForwardResult forward_on_tape(ad::Tape& tape, const TrainedModel& model,
                              std::span<const ad::Var> params, const GraphOperators& ops,
                              ad::Var features, const ForwardOptions& options) {
    const ModelSpec& spec = model.spec;
    if (params.size() != model.params.size()) {
        throw ShapeError("forward: parameter Var count does not match model");
    }
    if (features.cols() != spec.input_dim()) {
        throw ShapeError("forward: feature dimension " + std::to_string(features.cols()) +
                         " does not match model input " + std::to_string(spec.input_dim()));
    }
    if (features.rows() != ops.sym.rows) {
        throw ShapeError("forward: feature rows do not match graph size");
    }
    const ParamCursor p{params, model.params};
    const Activation act = spec.resolved_activation();
    const std::size_t num_layers = spec.layer_sizes.size() - 1;
    DropoutStream drop(options, spec.dropout);

    ForwardResult out;
    ad::Var h = features;
    ad::Var embeddings = features;

    auto dense_layer = [&](ad::Var x, std::size_t l) {
        return ad::add_bias(ad::matmul(x, p.get(layer_name(l, "weight"))),
                            p.get(layer_name(l, "bias")));
    };

    switch (spec.arch) {
    case Architecture::mlp:
    case Architecture::appnp: {
        for (std::size_t l = 0; l < num_layers; ++l) {
            h = dense_layer(drop.apply(h), l);
            if (l + 1 < num_layers) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        if (spec.arch == Architecture::appnp) {
            const ad::Var local = h;
            const ad::Var teleport = ad::scale(local, spec.teleport);
            for (std::size_t k = 0; k < spec.propagation_steps; ++k) {
                h = ad::add(ad::scale(ad::spmm(ops.sym, h), 1.0 - spec.teleport), teleport);
            }
        }
        break;
    }
    case Architecture::gcn: {
        for (std::size_t l = 0; l < num_layers; ++l) {
            const ad::Var z = ad::matmul(drop.apply(h), p.get(layer_name(l, "weight")));
            h = ad::add_bias(ad::spmm(ops.sym, z), p.get(layer_name(l, "bias")));
            if (l + 1 < num_layers) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        break;
    }
    case Architecture::graphsage: {
        for (std::size_t l = 0; l < num_layers; ++l) {
            const ad::Var x = drop.apply(h);
            const ad::Var parts[] = {x, ad::spmm(ops.mean_neighbors, x)};
            h = dense_layer(ad::concat_cols(parts), l);
            if (l + 1 < num_layers) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        break;
    }
    case Architecture::gat: {
        for (std::size_t l = 0; l < num_layers; ++l) {
            const bool last = l + 1 == num_layers;
            const std::size_t heads = last ? spec.output_heads : spec.heads;
            const ad::Var x = drop.apply(h);
            std::vector<ad::Var> head_out;
            for (std::size_t k = 0; k < heads; ++k) {
                const ad::Var z = ad::matmul(x, p.get(head_name(l, k, "weight")));
                const ad::Var src = ad::matmul(z, p.get(head_name(l, k, "att_src")));
                const ad::Var dst = ad::matmul(z, p.get(head_name(l, k, "att_dst")));
                const ad::Var scores =
                    ad::leaky_relu(ad::add(ad::edge_gather(ops.attention, dst, true),
                                           ad::edge_gather(ops.attention, src, false)),
                                   spec.attention_slope);
                const ad::Var alpha = ad::edge_softmax(ops.attention, scores);
                head_out.push_back(ad::edge_spmm(ops.attention, alpha, z));
            }
            ad::Var combined;
            if (last) {
                combined = head_out.front();
                for (std::size_t k = 1; k < head_out.size(); ++k) {
                    combined = ad::add(combined, head_out[k]);
                }
                combined = ad::scale(combined, 1.0 / static_cast<double>(heads));
            } else {
                combined = ad::concat_cols(head_out);
            }
            h = ad::add_bias(combined, p.get(layer_name(l, "bias")));
            if (!last) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        break;
    }
    case Architecture::sgat: {
        std::optional<ad::Var> alpha;
        if (options.fixed_coefficients != nullptr) {
            alpha = fixed_interaction(tape, ops, *options.fixed_coefficients);
        }
        for (std::size_t l = 0; l < num_layers; ++l) {
            const ad::Var z = ad::matmul(drop.apply(h), p.get(layer_name(l, "weight")));
            if (!alpha) {
                // Coefficients come from the first layer's transformed inputs only.
                const ad::Var src = ad::matmul(z, p.get("att_src"));
                const ad::Var dst = ad::matmul(z, p.get("att_dst"));
                const ad::Var scores =
                    ad::leaky_relu(ad::add(ad::edge_gather(ops.attention, dst, true),
                                           ad::edge_gather(ops.attention, src, false)),
                                   spec.attention_slope);
                alpha = ad::edge_softmax(ops.attention, scores);
            }
            h = ad::add_bias(ad::edge_spmm(ops.attention, *alpha, z), p.get(layer_name(l, "bias")));
            if (l + 1 < num_layers) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        out.interaction = alpha;
        break;
    }
    case Architecture::gcn_lpa: {
        ad::Var alpha;
        if (options.fixed_coefficients != nullptr) {
            alpha = fixed_interaction(tape, ops, *options.fixed_coefficients);
        } else {
            alpha = ad::edge_softmax(ops.attention, lpa_edge_logits(model, ops, p.get("edge_logits")));
        }
        for (std::size_t l = 0; l < num_layers; ++l) {
            const ad::Var z = ad::matmul(drop.apply(h), p.get(layer_name(l, "weight")));
            h = ad::add_bias(ad::edge_spmm(ops.attention, alpha, z), p.get(layer_name(l, "bias")));
            if (l + 1 < num_layers) {
                h = activate(h, act);
                embeddings = h;
            }
        }
        out.interaction = alpha;
        break;
    }
    }
    out.logits = h;
    out.embeddings = embeddings;
    return out;
}

ad::Var lpa_loss_on_tape(ad::Tape& tape, const CsrMatrix& pattern, ad::Var interaction,
                         const Graph& graph, std::span<const std::size_t> train_rows,
                         std::size_t iterations) {
    if (train_rows.empty()) {
        throw Error("label propagation loss needs training nodes");
    }
    std::vector<std::size_t> unique_rows(train_rows.begin(), train_rows.end());
    std::sort(unique_rows.begin(), unique_rows.end());
    unique_rows.erase(std::unique(unique_rows.begin(), unique_rows.end()), unique_rows.end());

    Tensor seed(graph.num_nodes, graph.num_classes);
    Tensor one_hot(unique_rows.size(), graph.num_classes);
    for (std::size_t k = 0; k < unique_rows.size(); ++k) {
        seed(unique_rows[k], graph.labels[unique_rows[k]]) = 1.0;
        one_hot(k, graph.labels[unique_rows[k]]) = 1.0;
    }
    ad::Var y = tape.constant(std::move(seed));
    for (std::size_t t = 0; t < iterations; ++t) {
        y = ad::edge_spmm(pattern, interaction, y);
        if (t + 1 < iterations) {
            y = ad::overwrite_rows(y, unique_rows, one_hot);
        }
    }
    return ad::nll_of_probabilities(y, train_rows, graph.labels);
}

TrainedModel init_model(const ModelSpec& spec, const Graph& graph, std::uint64_t seed) {
    spec.validate();
    if (spec.input_dim() != graph.feature_dim()) {
        throw ShapeError("model input size " + std::to_string(spec.input_dim()) +
                         " does not match feature dimension " + std::to_string(graph.feature_dim()));
    }
    if (spec.output_dim() != graph.num_classes) {
        throw ShapeError("model output size " + std::to_string(spec.output_dim()) +
                         " does not match class count " + std::to_string(graph.num_classes));
    }
    TrainedModel m;
    m.spec = spec;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    auto glorot = [&](std::string name, std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        Tensor w(fan_in, fan_out);
        for (double& v : w.data()) {
            v = u(rng);
        }
        m.params.push_back({std::move(name), std::move(w)});
    };
    auto zeros = [&](std::string name, std::size_t rows, std::size_t cols) {
        m.params.push_back({std::move(name), Tensor(rows, cols)});
    };

    const auto& sizes = spec.layer_sizes;
    const std::size_t num_layers = sizes.size() - 1;
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        switch (spec.arch) {
        case Architecture::graphsage:
            glorot(layer_name(l, "weight"), 2 * in, out);
            zeros(layer_name(l, "bias"), 1, out);
            break;
        case Architecture::gat: {
            const bool last = l + 1 == num_layers;
            const std::size_t heads = last ? spec.output_heads : spec.heads;
            const std::size_t width = last ? out : out / heads;
            for (std::size_t h = 0; h < heads; ++h) {
                glorot(head_name(l, h, "weight"), in, width);
                glorot(head_name(l, h, "att_src"), width, 1);
                glorot(head_name(l, h, "att_dst"), width, 1);
            }
            zeros(layer_name(l, "bias"), 1, out);
            break;
        }
        default:
            glorot(layer_name(l, "weight"), in, out);
            zeros(layer_name(l, "bias"), 1, out);
            break;
        }
        if (spec.arch == Architecture::sgat && l == 0) {
            glorot("att_src", out, 1);
            glorot("att_dst", out, 1);
        }
    }
    if (spec.arch == Architecture::gcn_lpa) {
        m.edge_pattern = with_self_loops(graph.adjacency);
        zeros("edge_logits", m.edge_pattern.nnz(), 1);
    }
    return m;
}

namespace {

struct EvalPass {
    ad::Tape tape;
    GraphOperators ops;
    ForwardResult result;
};

void run_eval(EvalPass& pass, const TrainedModel& model, const Graph& graph, const Tensor& features,
              const CsrMatrix* coefficients) {
    pass.ops = GraphOperators::build(graph);
    std::vector<ad::Var> vars;
    vars.reserve(model.params.size());
    for (const Parameter& p : model.params) {
        vars.push_back(pass.tape.constant(p.value));
    }
    ForwardOptions options;
    options.fixed_coefficients = coefficients;
    pass.result = forward_on_tape(pass.tape, model, vars, pass.ops,
                                  pass.tape.constant(features), options);
}

} // namespace

Tensor forward(const TrainedModel& model, const Graph& graph, const Tensor& features) {
    EvalPass pass;
    run_eval(pass, model, graph, features, nullptr);
    return pass.result.logits.value();
}

Tensor forward(const TrainedModel& model, const Graph& graph) {
    return forward(model, graph, graph.features);
}

Tensor forward_with_coefficients(const TrainedModel& model, const Graph& graph,
                                 const Tensor& features, const CsrMatrix& coefficients) {
    if (!has_interaction_structure(model.spec.arch)) {
        throw Error(std::string("architecture ") + to_string(model.spec.arch) +
                    " has no interaction structure");
    }
    EvalPass pass;
    run_eval(pass, model, graph, features, &coefficients);
    return pass.result.logits.value();
}

Tensor forward_rows(const TrainedModel& model, const Tensor& features) {
    if (model.spec.arch != Architecture::mlp) {
        throw Error("forward_rows needs a feature-only (MLP) model");
    }
    const std::size_t n = features.rows();
    GraphOperators ops;
    std::vector<std::pair<std::size_t, std::size_t>> diag;
    for (std::size_t i = 0; i < n; ++i) {
        diag.push_back({i, i});
    }
    ops.sym = CsrMatrix::from_triplets(n, n, diag, std::vector<double>(n, 1.0));
    ops.attention = ops.sym;
    ops.mean_neighbors = CsrMatrix::from_triplets(n, n, {}, {});
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Parameter& p : model.params) {
        vars.push_back(tape.constant(p.value));
    }
    return forward_on_tape(tape, model, vars, ops, tape.constant(features)).logits.value();
}

Tensor node_embeddings(const TrainedModel& model, const Graph& graph) {
    EvalPass pass;
    run_eval(pass, model, graph, graph.features, nullptr);
    return pass.result.embeddings.value();
}

double lpa_loss(const TrainedModel& model, const Graph& graph) {
    if (model.spec.arch != Architecture::gcn_lpa) {
        throw Error("lpa_loss requires a GCN-LPA model");
    }
    EvalPass pass;
    run_eval(pass, model, graph, graph.features, nullptr);
    const auto rows = graph.nodes_in(Split::train);
    return lpa_loss_on_tape(pass.tape, pass.ops.attention, *pass.result.interaction, graph, rows,
                            model.spec.lpa_iterations)
        .value()
        .item();
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
    // splitmix64 over (seed, epoch)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(epoch) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

TrainingSession::TrainingSession(TrainedModel model, const Graph& graph, const Tensor& features,
                                 const AdamConfig& adam)
    : model_(std::move(model)), graph_(&graph), features_(&features),
      ops_(GraphOperators::build(graph)) {
    const auto values = model_.param_values();
    optimizer_ = make_adam_state(values, adam);
}

EpochRecord TrainingSession::step(std::size_t epoch, const LossBuilder& loss) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    vars.reserve(model_.params.size());
    for (const Parameter& p : model_.params) {
        vars.push_back(tape.variable(p.value));
    }
    ForwardOptions options;
    options.train = true;
    options.dropout_seed = epoch_seed(model_.seed, epoch);
    const ForwardResult fr =
        forward_on_tape(tape, model_, vars, ops_, tape.constant(*features_), options);
    LossTerms terms = loss(tape, fr, ops_, epoch);
    const double total = terms.total.value().item();
    if (!std::isfinite(total)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " (" +
                              to_string(model_.spec.arch) + "): loss is not finite");
    }
    tape.backward(terms.total);
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (const ad::Var& v : vars) {
        grads.push_back(tape.grad(v));
    }
    std::vector<Tensor> values = model_.param_values();
    adam_step(values, grads, optimizer_);
    for (const Tensor& v : values) {
        if (!v.all_finite()) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  ": parameters are not finite");
        }
    }
    model_.set_param_values(std::move(values));
    EpochRecord record{total, std::move(terms.components)};
    model_.log.epochs.push_back(record);
    return record;
}

Tensor TrainingSession::logits() const { return forward(model_, *graph_, *features_); }

LossTerms supervised_terms(ad::Tape& tape, const ForwardResult& fr, const TrainedModel& model,
                           const Graph& graph, const GraphOperators& ops,
                           std::span<const std::size_t> rows,
                           std::span<const double> class_weights) {
    LossTerms terms;
    terms.total = ad::cross_entropy(fr.logits, rows, graph.labels, class_weights);
    terms.components["ce"] = terms.total.value().item();
    if (model.spec.arch == Architecture::gcn_lpa && model.spec.lpa_weight > 0.0) {
        const ad::Var lpa = lpa_loss_on_tape(tape, ops.attention, *fr.interaction, graph, rows,
                                             model.spec.lpa_iterations);
        terms.components["lpa"] = lpa.value().item();
        terms.total = ad::add(terms.total, ad::scale(lpa, model.spec.lpa_weight));
    }
    return terms;
}

std::vector<std::size_t> training_rows(const Graph& graph, bool oversample, std::uint64_t seed) {
    std::vector<std::size_t> rows = graph.nodes_in(Split::train);
    if (rows.empty()) {
        throw Error("graph has an empty train mask");
    }
    if (oversample) {
        rows = oversample_minority(graph.labels, rows, seed);
    }
    return rows;
}

TrainedModel train_supervised(const ModelSpec& spec, const Graph& graph, const TrainConfig& config) {
    if (config.epochs == 0) {
        throw Error("train_supervised: epochs must be positive");
    }
    const std::vector<std::size_t> rows = training_rows(graph, config.oversample, config.seed);
    TrainingSession session(init_model(spec, graph, config.seed), graph, graph.features,
                            config.adam);
    const std::vector<double>& weights = config.class_weights;
    const LossBuilder builder = [&](ad::Tape& tape, const ForwardResult& fr,
                                    const GraphOperators& ops, std::size_t) {
        return supervised_terms(tape, fr, session.model(), graph, ops, rows, weights);
    };
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        session.step(epoch, builder);
    }
    return std::move(session).release();
}

void InteractionMatrix::validate() const {
    const auto sums = row_sums(matrix);
    for (std::size_t r = 0; r < matrix.rows; ++r) {
        if (std::abs(sums[r] - 1.0) > 1e-9) {
            throw Error("interaction matrix row " + std::to_string(r) + " sums to " +
                        std::to_string(sums[r]));
        }
    }
    for (double v : matrix.val) {
        if (!(v >= 0.0)) {
            throw Error("interaction matrix has a negative or non-finite entry");
        }
    }
}

InteractionMatrix extract_interaction_matrix(const TrainedModel& model, const Graph& graph) {
    if (!has_interaction_structure(model.spec.arch)) {
        throw Error(std::string("no interaction structure: architecture ") +
                    to_string(model.spec.arch) + " does not learn a shared interaction matrix");
    }
    EvalPass pass;
    run_eval(pass, model, graph, graph.features, nullptr);
    InteractionMatrix im;
    im.matrix = pass.ops.attention;
    im.matrix.val = pass.result.interaction->value().data();
    im.source = to_string(model.spec.arch);
    return im;
}

} // namespace pgx
