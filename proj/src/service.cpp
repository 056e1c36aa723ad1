#include "pgx/service.hpp"

#include <charconv>
#include <cmath>
#include <mutex>
#include <tuple>

#include <httplib.h>

#include "pgx/pipeline.hpp"
#include "pgx/shap.hpp"

namespace pgx {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
    return out;
}

ServiceResponse reply(const json& body, int status = 200) { return {status, body.dump()}; }

ServiceResponse fail(int status, const std::string& message) { return reply({{"error", message}}, status); }

/// 400 with a message; thrown by request parsing helpers.
struct BadRequest {
    std::string message;
};

std::size_t parse_index(const std::string& text, const std::string& what) {
    std::size_t v = 0;
    const char* end = text.data() + text.size();
    const auto r = std::from_chars(text.data(), end, v);
    if (text.empty() || r.ec != std::errc{} || r.ptr != end) throw BadRequest{what + " must be a nonnegative integer"};
    return v;
}

double parse_number(const std::string& text, const std::string& what) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto r = std::from_chars(text.data(), end, v);
    if (text.empty() || r.ec != std::errc{} || r.ptr != end || !std::isfinite(v)) {
        throw BadRequest{what + " must be a finite number"};
    }
    return v;
}

std::size_t query_index(const ServiceRequest& r, const std::string& key, std::size_t fallback) {
    const auto it = r.query.find(key);
    return it == r.query.end() ? fallback : parse_index(it->second, key);
}

double query_number(const ServiceRequest& r, const std::string& key, double fallback) {
    const auto it = r.query.find(key);
    return it == r.query.end() ? fallback : parse_number(it->second, key);
}

json parse_body(const ServiceRequest& r) {
    json body = json::parse(r.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw BadRequest{"body must be a JSON object"};
    return body;
}

std::size_t undirected_edges(const Graph& g) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < g.num_nodes; ++r) {
        for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
            n += g.adjacency.col[e] >= r;
        }
    }
    return n;
}

json neighbor_json(const NeighborInfluence& n) { return {{"node", n.node}, {"hop", n.hop}, {"score", n.score}}; }

json edge_json(std::size_t src, std::size_t dst, double w) { return {{"src", src}, {"dst", dst}, {"weight", w}}; }

} // namespace

MissingArtifactsError::MissingArtifactsError(std::vector<std::string> missing)
    : Error("missing artifacts: " + join(missing)), missing_(std::move(missing)) {}

std::vector<std::string> required_service_artifacts() {
    return {"teacher.ckpt", "interaction.csr", "ranks.tensor", "projection.tensor", "manifests/structure.txt"};
}

struct ExplainService::State {
    Graph graph;
    std::vector<std::size_t> predictions;
    InteractionMatrix interaction;
    NodeRanks ranks;
    Tensor coords;
    PprConfig ppr;
    std::optional<json> components;
    std::optional<TrainedModel> feature_student;
    ShapConfig shap;

    mutable std::mutex mutex;
    /// (pi hash, damping, tol) -> (pi, ranks); the stored pi guards against hash collisions.
    mutable std::map<std::tuple<std::uint64_t, double, double>, std::vector<std::pair<PreferenceVector, NodeRanks>>>
        ppr_cache;
    mutable std::map<std::size_t, std::string> feature_cache;
};

ExplainService::ExplainService(std::shared_ptr<State> state) : state_(std::move(state)) {}

ExplainService ExplainService::open(const ArtifactStore& store, const RunId& run) {
    std::vector<std::string> missing;
    if (!store.has_graph()) missing.push_back("graph/");
    const std::string prefix = "runs/" + run.dir_name() + "/";
    for (const std::string& m : store.missing(run, required_service_artifacts())) missing.push_back(prefix + m);
    if (!missing.empty()) throw MissingArtifactsError(missing);

    auto s = std::make_shared<State>();
    s->graph = store.load_graph();
    const TrainedModel teacher = store.get_model(run, "teacher");
    if (teacher.spec.input_dim() != s->graph.feature_dim() || teacher.spec.output_dim() != s->graph.num_classes) {
        throw ShapeError("teacher does not match the workspace graph");
    }
    s->predictions = argmax_rows(forward(teacher, s->graph));
    s->interaction.matrix = store.get_matrix(run, "interaction");
    s->interaction.source = "stored";
    s->interaction.validate();
    s->ranks.scores = store.get_tensor(run, "ranks").data();
    s->coords = store.get_tensor(run, "projection");
    const std::size_t n = s->graph.num_nodes;
    if (s->interaction.matrix.rows != n || s->ranks.scores.size() != n || s->coords.rows() != n ||
        s->coords.cols() != 2) {
        throw ShapeError("stored structure artifacts do not match the workspace graph");
    }

    const Config structure = parse_manifest(store.get_manifest(run, "structure")).config;
    s->ppr.damping = structure.get_double("damping", s->ppr.damping);
    s->ppr.tol = structure.get_double("tol", s->ppr.tol);
    s->ppr.max_iter = structure.get_size("max_iter", s->ppr.max_iter);
    s->ppr.transpose = structure.get_bool("transpose", s->ppr.transpose);

    if (store.has(run, "reports/component.json")) {
        const json rep = json::parse(store.get_report(run, "component"));
        s->components = json{{"model", rep.at("model")}, {"components", rep.at("components")}};
    }
    if (store.has(run, "feature_student.ckpt") && store.has(run, "feature_background.tensor")) {
        s->feature_student = store.get_model(run, "feature_student");
        s->shap.background = store.get_tensor(run, "feature_background");
        s->shap.seed = run.seed;
        if (store.has(run, "manifests/feature.txt")) {
            const Config feature = parse_manifest(store.get_manifest(run, "feature")).config;
            s->shap.samples = feature.get_size("samples", 0);
            s->shap.exact_threshold = feature.get_size("exact_threshold", s->shap.exact_threshold);
        }
    }
    return ExplainService(std::move(s));
}

std::size_t ExplainService::ppr_cache_size() const {
    std::lock_guard lock(state_->mutex);
    std::size_t n = 0;
    for (const auto& [k, v] : state_->ppr_cache) n += v.size();
    return n;
}

NodeRanks ExplainService::cached_ppr(const PreferenceVector& pi, const PprConfig& cfg) const {
    const auto key = std::make_tuple(pi.hash(), cfg.damping, cfg.tol);
    {
        std::lock_guard lock(state_->mutex);
        const auto it = state_->ppr_cache.find(key);
        if (it != state_->ppr_cache.end()) {
            for (const auto& [p, r] : it->second) {
                if (p.values == pi.values) return r;
            }
        }
    }
    NodeRanks ranks = personalized_pagerank(state_->interaction, pi, cfg);
    std::lock_guard lock(state_->mutex);
    auto& bucket = state_->ppr_cache[key];
    for (const auto& [p, r] : bucket) {
        if (p.values == pi.values) return r;
    }
    bucket.emplace_back(pi, ranks);
    return ranks;
}

ServiceResponse ExplainService::handle(const ServiceRequest& r) const {
    try {
        const std::string& p = r.path;
        if (r.method == "GET" && p == "/graph/summary") return summary();
        if (r.method == "GET" && p == "/graph/global") return global(r);
        if (r.method == "GET" && p == "/components") return components();
        if (r.method == "POST" && p == "/ppr") return ppr(r);
        if (r.method == "POST" && p == "/explain/feature") return explain_feature(r);
        const std::string node_prefix = "/node/";
        const std::string local_suffix = "/local";
        if (r.method == "GET" && p.size() > node_prefix.size() + local_suffix.size() && p.rfind(node_prefix, 0) == 0 &&
            p.compare(p.size() - local_suffix.size(), local_suffix.size(), local_suffix) == 0) {
            const std::string id = p.substr(node_prefix.size(), p.size() - node_prefix.size() - local_suffix.size());
            return local(parse_index(id, "node id"), r);
        }
        return fail(404, "no route for " + r.method + " " + p);
    } catch (const BadRequest& e) {
        return fail(400, e.message);
    } catch (const json::exception& e) {
        return fail(400, std::string("malformed request: ") + e.what());
    } catch (const Error& e) {
        return fail(400, e.what());
    }
}

ServiceResponse ExplainService::summary() const {
    const Graph& g = state_->graph;
    return reply({{"num_nodes", g.num_nodes},
                  {"num_edges", undirected_edges(g)},
                  {"num_classes", g.num_classes},
                  {"feature_dim", g.feature_dim()}});
}

ServiceResponse ExplainService::global(const ServiceRequest& r) const {
    const State& s = *state_;
    const std::size_t top_k = query_index(r, "top_k", 50);
    const double threshold = query_number(r, "edge_threshold", 0.3);
    if (threshold < 0.0) throw BadRequest{"edge_threshold must be nonnegative"};

    json coords = json::array();
    for (std::size_t v = 0; v < s.graph.num_nodes; ++v) coords.push_back({s.coords(v, 0), s.coords(v, 1)});
    json edges = json::array();
    const CsrMatrix& a = s.interaction.matrix;
    for (std::size_t dst = 0; dst < a.rows; ++dst) {
        for (std::size_t e = a.row_ptr[dst]; e < a.row_ptr[dst + 1]; ++e) {
            if (a.col[e] != dst && a.val[e] >= threshold) edges.push_back(edge_json(a.col[e], dst, a.val[e]));
        }
    }
    return reply({{"top_k", top_k},
                  {"edge_threshold", threshold},
                  {"coords", std::move(coords)},
                  {"labels", s.graph.labels},
                  {"predictions", s.predictions},
                  {"ranks", s.ranks.scores},
                  {"top_nodes", s.ranks.top(std::min(top_k, s.graph.num_nodes))},
                  {"edges", std::move(edges)}});
}

ServiceResponse ExplainService::local(std::size_t node, const ServiceRequest& r) const {
    const State& s = *state_;
    if (node >= s.graph.num_nodes) return fail(404, "node " + std::to_string(node) + " does not exist");
    const std::size_t k = query_index(r, "k", 2);
    const std::size_t top_m = query_index(r, "top_m", 10);
    const auto hint_it = r.query.find("layout_hint");
    const std::string hint = hint_it == r.query.end() ? "force" : hint_it->second;
    if (hint != "force" && hint != "hierarchy") throw BadRequest{"layout_hint must be force or hierarchy"};
    if (k == 0) throw BadRequest{"k must be at least 1"};

    const NodeRanks ranks = cached_ppr(PreferenceVector::one_hot(s.graph.num_nodes, node), s.ppr);
    const LocalExplanation ex = local_explanation(s.graph, s.predictions, s.interaction, node, k, top_m, ranks);

    json per_hop = json::array();
    for (const auto& hop : ex.per_hop) {
        json level = json::array();
        for (const NeighborInfluence& n : hop) level.push_back(neighbor_json(n));
        per_hop.push_back(std::move(level));
    }
    json edges = json::array();
    for (const InfluenceEdge& e : ex.edges) edges.push_back(edge_json(e.src, e.dst, e.weight));
    json body{{"node", node},
              {"k", k},
              {"top_m", top_m},
              {"layout_hint", hint},
              {"per_hop_neighbors", std::move(per_hop)},
              {"edge_weights", std::move(edges)},
              {"feature_sim", ex.similarity.feature_sim},
              {"label_sim", ex.similarity.label_sim},
              {"neighbor_count", ex.similarity.neighbors},
              {"empty_neighborhood", ex.similarity.empty_neighborhood},
              {"prediction", ex.prediction},
              {"label", ex.label},
              {"root_score", ex.root_score}};
    if (hint == "hierarchy") {
        // rings: root, then the kept neighbors of each hop
        json levels = json::array({json::array({node})});
        for (const auto& hop : ex.per_hop) {
            json ids = json::array();
            for (const NeighborInfluence& n : hop) ids.push_back(n.node);
            levels.push_back(std::move(ids));
        }
        body["levels"] = std::move(levels);
    }
    return reply(body);
}

ServiceResponse ExplainService::ppr(const ServiceRequest& r) const {
    const State& s = *state_;
    const json body = parse_body(r);
    if (!body.contains("preference") || !body["preference"].is_object()) {
        throw BadRequest{"preference must be an object mapping node ids to weights"};
    }
    std::map<std::size_t, double> weights;
    for (const auto& [key, value] : body["preference"].items()) {
        const std::size_t v = parse_index(key, "preference node id");
        if (v >= s.graph.num_nodes) throw BadRequest{"preference node " + key + " does not exist"};
        if (!value.is_number()) throw BadRequest{"preference weights must be numbers"};
        const double w = value.get<double>();
        if (!std::isfinite(w) || w < 0.0) throw BadRequest{"preference weights must be finite and nonnegative"};
        weights[v] = w;
    }
    PprConfig cfg = s.ppr;
    if (body.contains("damping")) cfg.damping = body["damping"].get<double>();
    if (body.contains("tol")) cfg.tol = body["tol"].get<double>();
    cfg.validate();
    const std::size_t top_k = body.contains("top_k") ? body["top_k"].get<std::size_t>() : 50;

    const NodeRanks ranks = cached_ppr(PreferenceVector::from_weights(s.graph.num_nodes, weights), cfg);
    return reply({{"ranks", ranks.scores},
                  {"residual", ranks.residual},
                  {"iterations", ranks.iterations},
                  {"converged", ranks.converged},
                  {"damping", cfg.damping},
                  {"tol", cfg.tol},
                  {"top_nodes", ranks.top(std::min(top_k, s.graph.num_nodes))}});
}

ServiceResponse ExplainService::explain_feature(const ServiceRequest& r) const {
    const State& s = *state_;
    if (!s.feature_student) return fail(404, "run has no feature attribution (run attribute feature first)");
    const json body = parse_body(r);
    if (!body.contains("node_id") || !body["node_id"].is_number_unsigned()) {
        throw BadRequest{"node_id must be a nonnegative integer"};
    }
    const std::size_t node = body["node_id"].get<std::size_t>();
    if (node >= s.graph.num_nodes) return fail(404, "node " + std::to_string(node) + " does not exist");
    {
        std::lock_guard lock(s.mutex);
        const auto it = s.feature_cache.find(node);
        if (it != s.feature_cache.end()) return {200, it->second};
    }
    ShapConfig cfg = s.shap;
    cfg.seed = s.shap.seed + node;
    const auto x = s.graph.features.row(node);
    const FeatureAttribution a = kernel_shap(mlp_probability_fn(*s.feature_student), x, cfg, node);
    json rows = json::array();
    for (std::size_t j = 0; j < a.phi.size(); ++j) {
        const std::string name = s.graph.feature_names.empty() ? "f" + std::to_string(j) : s.graph.feature_names[j];
        rows.push_back({{"feature", j}, {"name", name}, {"value", x[j]}, {"phi", a.phi[j]}});
    }
    const std::string text = json{{"node", node},
                                  {"target", a.target},
                                  {"base_value", a.base_value},
                                  {"prediction", a.prediction},
                                  {"exact", a.exact},
                                  {"rows", std::move(rows)}}
                                 .dump();
    std::lock_guard lock(s.mutex);
    return {200, s.feature_cache.emplace(node, text).first->second};
}

ServiceResponse ExplainService::components() const {
    if (!state_->components) return fail(404, "run has no component attribution (run attribute component first)");
    return reply(*state_->components);
}

// ---- HTTP -------------------------------------------------------------------

struct HttpServer::Impl {
    const ExplainService* service = nullptr;
    httplib::Server server;
};

HttpServer::HttpServer(const ExplainService& service) : impl_(std::make_unique<Impl>()) {
    impl_->service = &service;
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ServiceRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        r.body = req.body;
        const ServiceResponse out = impl_->service->handle(r);
        res.status = out.status;
        res.set_content(out.body, "application/json");
    };
    impl_->server.Get(R"(/.*)", handler);
    impl_->server.Post(R"(/.*)", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() {
    if (!impl_->server.listen_after_bind()) throw Error("HTTP server stopped with an error");
}

void HttpServer::stop() { impl_->server.stop(); }

} // namespace pgx
