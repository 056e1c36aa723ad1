#include "pgx/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "pgx/component.hpp"
#include "pgx/distillation.hpp"
#include "pgx/error.hpp"
#include "pgx/metrics.hpp"
#include "pgx/projection.hpp"
#include "pgx/shap.hpp"
#include "pgx/structure.hpp"

namespace pgx {

using nlohmann::json;

namespace {

constexpr const char* manifest_prefix = "manifest.";

std::size_t undirected_edges(const Graph& g) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < g.num_nodes; ++r) {
        for (std::size_t e = g.adjacency.row_ptr[r]; e < g.adjacency.row_ptr[r + 1]; ++e) {
            n += g.adjacency.col[e] >= r;
        }
    }
    return n;
}

json log_json(const TrainingLog& log) {
    json epochs = json::array();
    for (const EpochRecord& r : log.epochs) {
        epochs.push_back({{"total", r.total}, {"components", r.components}});
    }
    return epochs;
}

json fidelity_json(const FidelityReport& f) {
    json j{{"accuracy", f.accuracy}, {"agreement", f.agreement}, {"kl", f.kl}, {"count", f.count}};
    if (f.delta_acc) j["delta_acc"] = *f.delta_acc;
    return j;
}

json binary_json(const ClassificationMetrics& m) {
    return {{"accuracy", m.accuracy}, {"auc", m.auc}, {"recall", m.recall}};
}

json spec_json(const ModelSpec& s) {
    return {{"arch", to_string(s.arch)}, {"layer_sizes", s.layer_sizes}, {"dropout", s.dropout}};
}

std::vector<std::size_t> mask_nodes(const Graph& g, const std::string& mask) {
    if (mask == "all") return g.all_nodes();
    const Split s = parse_split(mask);
    if (s == Split::none) throw Error("mask must be train, val, test or all");
    return g.nodes_in(s);
}

AdamConfig adam_from(const Config& c) {
    AdamConfig a;
    a.learning_rate = c.get_double("lr", a.learning_rate);
    a.weight_decay = c.get_double("weight_decay", a.weight_decay);
    return a;
}

ModelSpec spec_from(const Config& c, const std::string& arch_key, const std::string& arch_default,
                    const Graph& g) {
    const Architecture arch = parse_architecture(c.get_string(arch_key, arch_default));
    ModelSpec s = default_model_spec(arch, g.feature_dim(), g.num_classes, c.get_size("hidden", 64));
    s.dropout = c.get_double("dropout", s.dropout);
    if (arch == Architecture::appnp) {
        s.propagation_steps = c.get_size("propagation_steps", s.propagation_steps);
        s.teleport = c.get_double("teleport", s.teleport);
    }
    if (arch == Architecture::gcn_lpa) {
        s.lpa_iterations = c.get_size("lpa_iterations", s.lpa_iterations);
        s.lpa_weight = c.get_double("lpa_weight", s.lpa_weight);
    }
    s.validate();
    return s;
}

std::vector<double> class_weights_from(const Config& c, const Graph& g) {
    const std::string mode = c.get_string("class_weights", "none");
    if (mode == "none") return {};
    if (mode == "balanced") return balanced_class_weights(g.labels, g.nodes_in(Split::train), g.num_classes);
    throw Error("class_weights must be none or balanced");
}

KDConfig kd_from(const Config& c, std::uint64_t seed, Architecture student, const Graph& g) {
    KDConfig kd;
    kd.temperature = c.get_double("tau", kd.temperature);
    kd.lambda = c.get_double("lambda", kd.lambda);
    kd.epochs = c.get_size("epochs", student == Architecture::mlp ? mlp_student_epochs : kd.epochs);
    kd.exposure = parse_exposure(c.get_string("exposure", to_string(kd.exposure)));
    kd.adam = adam_from(c);
    kd.seed = seed;
    kd.scale_by_tau_squared = c.get_bool("tau_squared", false);
    kd.class_weights = class_weights_from(c, g);
    kd.oversample = c.get_bool("oversample", false);
    kd.validate();
    return kd;
}

/// Teacher named by the `teacher` key (default: this run), stored as `teacher_artifact`.
TrainedModel load_teacher(const PipelineContext& ctx, const std::string& run) {
    const RunId id{ctx.config.get_string("teacher", run), ctx.config.get_u64("teacher_seed", ctx.seed)};
    const std::string artifact = ctx.config.get_string("teacher_artifact", "model");
    if (!ctx.store.has(id, artifact + ".ckpt")) {
        throw Error("teacher " + id.dir_name() + "/" + artifact + ".ckpt not found (train it first)");
    }
    return ctx.store.get_model(id, artifact);
}

void check_model_fits(const TrainedModel& m, const Graph& g, const std::string& what) {
    if (m.spec.input_dim() != g.feature_dim() || m.spec.output_dim() != g.num_classes) {
        throw ShapeError(what + " does not match the workspace graph");
    }
}

json base_report(const std::string& verb, const RunId& run, const Config& config) {
    return {{"verb", verb}, {"run", run.name}, {"seed", run.seed}, {"config", config.resolved()}};
}

void finish(const PipelineContext& ctx, const RunId& run, const std::string& key, const json& report,
            const std::string& verb) {
    ctx.store.put_report(run, key, dump_report(report));
    ctx.store.put_manifest(run, key, make_manifest(verb, run, ctx.config));
}

/// Runs named after an architecture train that architecture unless arch= says otherwise.
std::string run_arch_default(const std::string& run) {
    try {
        return to_string(parse_architecture(run));
    } catch (const Error&) {
        return "gcn";
    }
}

SyntheticSpec preset_spec(const std::string& preset, std::uint64_t seed) {
    SyntheticSpec s;
    s.seed = seed;
    if (preset == "sbm") return s;
    if (preset == "two_clique") {
        s.nodes_per_block = 10;
        s.p_in = 1.0;
        s.p_out = 0.0;
        s.d_informative = 4;
        s.d_noise = 2;
        s.class_separation = 2.0;
        return s;
    }
    if (preset == "citation") return citation_style_spec(seed);
    if (preset == "imbalanced") {
        s.nodes_per_block = 1600;
        s.imbalance_ratio = 4.0;
        s.p_in = 0.005;
        s.p_out = 0.002;
        s.d_informative = 5;
        s.d_noise = 15;
        s.class_separation = 0.8;
        return s;
    }
    throw Error("unknown preset '" + preset + "' (sbm, two_clique, citation, imbalanced, bundle)");
}

// ---- distillation shared by run_distill and run_replay --------------------

struct DistillOutcome {
    std::map<std::string, TrainedModel> models;
    json report;
};

DistillOutcome distill_offline_outcome(const PipelineContext& ctx, const RunId& run, const Graph& g) {
    const TrainedModel teacher = load_teacher(ctx, run.name);
    check_model_fits(teacher, g, "teacher");
    const ModelSpec spec = spec_from(ctx.config, "student", "mlp", g);
    const KDConfig kd = kd_from(ctx.config, ctx.seed, spec.arch, g);
    const std::string mask = ctx.config.get_string("mask", "test");
    TrainedModel student = distill_offline(teacher, spec, g, kd);

    DistillOutcome out;
    out.report = base_report("distill", run, ctx.config);
    out.report["mode"] = "offline";
    out.report["teacher"] = spec_json(teacher.spec);
    out.report["student"] = spec_json(spec);
    out.report["epochs"] = log_json(student.log);
    out.report["final_loss"] = student.log.final_loss();
    out.report["fidelity"] = fidelity_json(evaluate_fidelity(teacher, student, g, mask_nodes(g, mask)));
    out.models.emplace("student", std::move(student));
    out.models.emplace("teacher", teacher);
    return out;
}

DistillOutcome distill_online_outcome(const PipelineContext& ctx, const RunId& run, const Graph& g) {
    const Config& c = ctx.config;
    const std::vector<std::string> names = c.get_list("participants", {"appnp", "gcn_lpa", "mlp"});
    if (names.empty()) throw Error("online distillation needs participants");
    const std::size_t hidden = c.get_size("hidden", 64);
    const double dropout = c.get_double("dropout", 0.5);
    std::vector<ModelSpec> specs;
    for (const std::string& n : names) {
        ModelSpec s = default_model_spec(parse_architecture(n), g.feature_dim(), g.num_classes, hidden);
        s.dropout = dropout;
        specs.push_back(s);
    }
    OnlineKDConfig cfg;
    cfg.temperature = c.get_double("tau", cfg.temperature);
    cfg.epochs = c.get_size("epochs", cfg.epochs);
    cfg.adam = adam_from(c);
    cfg.seed = ctx.seed;
    cfg.target = parse_ensemble_target(c.get_string("target", to_string(cfg.target)));
    cfg.mlp_loss_factor = c.get_double("mlp_loss_factor", cfg.mlp_loss_factor);
    cfg.mlp_peer_kl = c.get_bool("mlp_peer_kl", cfg.mlp_peer_kl);
    cfg.validate();
    // Participant `reference` plays the teacher role in the fidelity table.
    const std::size_t reference = c.get_size("reference", 0);
    if (reference >= specs.size()) throw Error("reference participant out of range");
    const std::vector<std::size_t> mask = mask_nodes(g, c.get_string("mask", "test"));

    const std::vector<TrainedModel> models = distill_online(specs, g, cfg);
    DistillOutcome out;
    out.report = base_report("distill", run, c);
    out.report["mode"] = "online";
    out.report["reference"] = reference;
    json parts = json::array();
    for (std::size_t i = 0; i < models.size(); ++i) {
        json p{{"index", i},
               {"model", spec_json(models[i].spec)},
               {"init_seed", models[i].seed},
               {"final_loss", models[i].log.final_loss()},
               {"epochs", log_json(models[i].log)},
               {"fidelity", fidelity_json(evaluate_fidelity(models[reference], models[i], g, mask))}};
        parts.push_back(std::move(p));
        out.models.emplace("participant" + std::to_string(i), models[i]);
    }
    out.report["participants"] = std::move(parts);
    return out;
}

DistillOutcome distill_outcome(const PipelineContext& ctx, const RunId& run, const std::string& mode) {
    const Graph g = ctx.store.load_graph();
    if (mode == "offline") return distill_offline_outcome(ctx, run, g);
    if (mode == "online") return distill_online_outcome(ctx, run, g);
    throw Error("distill mode must be offline, online or replay");
}

// ---- attribution -----------------------------------------------------------

json attribute_component(const PipelineContext& ctx, const RunId& run, const Graph& g) {
    const TrainedModel model = load_teacher(ctx, run.name);
    check_model_fits(model, g, "model");
    const FeatureReference ref = FeatureReference::parse(ctx.config.get_string("feature_ref", "ones"));
    const std::vector<std::size_t> nodes = mask_nodes(g, ctx.config.get_string("mask", "test"));
    json rows = json::array();
    for (const ComponentAttribution& a : component_report(model, g, ref, nodes)) {
        rows.push_back({{"component", to_string(a.component)},
                        {"mc", a.mc},
                        {"delta_acc", a.delta_acc},
                        {"reference", a.reference},
                        {"nodes", a.nodes.size()}});
    }
    json report = base_report("attribute", run, ctx.config);
    report["kind"] = "component";
    report["model"] = spec_json(model.spec);
    report["components"] = std::move(rows);
    return report;
}

json feature_rows(const Graph& g, const FeatureAttribution& a, std::span<const double> x) {
    json rows = json::array();
    for (std::size_t j = 0; j < a.phi.size(); ++j) {
        rows.push_back({{"feature", j}, {"name", g.feature_names.empty() ? "f" + std::to_string(j) : g.feature_names[j]},
                        {"value", x[j]}, {"phi", a.phi[j]}});
    }
    return rows;
}

json importance_json(const Graph& g, const GlobalImportance& imp, std::span<const std::size_t> columns) {
    auto name = [&](std::size_t j) {
        const std::size_t col = columns.empty() ? j : columns[j];
        return g.feature_names.empty() ? "f" + std::to_string(col) : g.feature_names[col];
    };
    json table = json::array();
    for (std::size_t j : imp.ranking) {
        table.push_back({{"feature", columns.empty() ? j : columns[j]}, {"name", name(j)}, {"mean_abs", imp.mean_abs[j]}});
    }
    return table;
}

json student_summary_json(const StudentSummary& s) {
    json j{{"features", s.features}, {"fidelity", fidelity_json(s.fidelity)}, {"final_loss", s.final_loss}};
    if (s.binary) j["binary"] = binary_json(*s.binary);
    return j;
}

json attribute_feature(const PipelineContext& ctx, const RunId& run, const Graph& g) {
    const Config& c = ctx.config;
    const TrainedModel teacher = load_teacher(ctx, run.name);
    check_model_fits(teacher, g, "teacher");
    const std::size_t hidden = c.get_size("hidden", 64);
    const KDConfig kd = kd_from(c, ctx.seed, Architecture::mlp, g);

    std::vector<std::size_t> nodes = mask_nodes(g, c.get_string("nodes", "test"));
    const std::size_t max_nodes = c.get_size("max_nodes", 100);
    if (max_nodes > 0 && nodes.size() > max_nodes) nodes.resize(max_nodes);
    if (nodes.empty()) throw Error("no nodes to explain");

    ShapConfig shap;
    const std::string bg = c.get_string("background", "stratified");
    const BackgroundMode mode = bg == "ones" ? BackgroundMode::ones : BackgroundMode::stratified;
    if (bg != "ones" && bg != "stratified") throw Error("background must be stratified or ones");
    shap.background = make_background(g, mode, c.get_size("background_size", 50), ctx.seed);
    shap.samples = c.get_size("samples", 0);
    shap.exact_threshold = c.get_size("exact_threshold", shap.exact_threshold);
    shap.seed = ctx.seed;
    const std::size_t topk = c.get_size("topk", 0);

    json report = base_report("attribute", run, c);
    report["kind"] = "feature";
    TrainedModel student;
    GlobalImportance imp;
    if (topk > 0) {
        TopkReport t = topk_retrain(teacher, g, topk, kd, shap, nodes, hidden);
        report["topk"] = {{"k", t.k},
                          {"selected", t.selected},
                          {"all_features", student_summary_json(t.all_features)},
                          {"top_features", student_summary_json(t.top_features)}};
        ctx.store.put_model(run, "feature_top_student", t.top_student);
        student = std::move(t.all_student);
        imp = std::move(t.importance);
    } else {
        student = distill_offline(teacher, default_model_spec(Architecture::mlp, g.feature_dim(), g.num_classes, hidden),
                                  g, kd);
        imp = global_importance(mlp_probability_fn(student), select_rows(g.features, nodes), shap, nodes);
    }
    report["student"] = spec_json(student.spec);
    report["fidelity"] = fidelity_json(evaluate_fidelity(teacher, student, g, g.nodes_in(Split::test)));
    report["global"] = importance_json(g, imp, {});
    json inst = json::array();
    for (const FeatureAttribution& a : imp.instances) {
        inst.push_back({{"node", a.instance},
                        {"target", a.target},
                        {"base_value", a.base_value},
                        {"prediction", a.prediction},
                        {"exact", a.exact},
                        {"rows", feature_rows(g, a, g.features.row(a.instance))}});
    }
    report["instances"] = std::move(inst);
    ctx.store.put_model(run, "feature_student", student);
    ctx.store.put_tensor(run, "feature_background", shap.background);
    return report;
}

json attribute_structure(const PipelineContext& ctx, const RunId& run, const Graph& g) {
    const Config& c = ctx.config;
    const TrainedModel teacher = load_teacher(ctx, run.name);
    check_model_fits(teacher, g, "teacher");
    const ModelSpec spec = spec_from(c, "student", "gcn_lpa", g);
    const KDConfig kd = kd_from(c, ctx.seed, spec.arch, g);
    PprConfig ppr;
    ppr.damping = c.get_double("damping", ppr.damping);
    ppr.tol = c.get_double("tol", ppr.tol);
    ppr.max_iter = c.get_size("max_iter", ppr.max_iter);
    ppr.transpose = c.get_bool("transpose", ppr.transpose);
    ProjectionConfig proj;
    proj.method = parse_projection_method(c.get_string("projection", "pca"));
    proj.perplexity = c.get_double("perplexity", proj.perplexity);
    proj.iterations = c.get_size("projection_iterations", proj.iterations);
    proj.seed = ctx.seed;
    const std::size_t top_k = c.get_size("top_k", 50);

    std::map<std::size_t, double> weights;
    for (const std::string& v : c.get_list("preference", {})) {
        weights[std::stoul(v)] += 1.0;
    }
    const PreferenceVector pi =
        weights.empty() ? PreferenceVector::uniform(g.num_nodes) : PreferenceVector::from_weights(g.num_nodes, weights);

    StructureExplanation ex = explain_structure(teacher, g, pi, spec, kd, ppr);
    const Projection p = project_embeddings(node_embeddings(ex.student, g), proj);

    json report = base_report("attribute", run, c);
    report["kind"] = "structure";
    report["student"] = spec_json(spec);
    report["interaction"] = {{"source", ex.interaction.source}, {"nnz", ex.interaction.matrix.nnz()}};
    report["ranks"] = {{"residual", ex.ranks.residual},
                       {"iterations", ex.ranks.iterations},
                       {"converged", ex.ranks.converged},
                       {"top_nodes", ex.ranks.top(std::min(top_k, g.num_nodes))}};
    report["projection"] = {{"method", to_string(proj.method)}, {"degenerate", p.degenerate}};
    report["fidelity"] = fidelity_json(evaluate_fidelity(teacher, ex.student, g, g.nodes_in(Split::test)));

    ctx.store.put_model(run, "teacher", teacher);
    ctx.store.put_model(run, "structure_student", ex.student);
    ctx.store.put_matrix(run, "interaction", ex.interaction.matrix);
    ctx.store.put_tensor(run, "ranks", Tensor::column(ex.ranks.scores));
    ctx.store.put_tensor(run, "projection", p.coords);
    return report;
}

} // namespace

const char* to_string(AttributionKind k) {
    switch (k) {
    case AttributionKind::component: return "component";
    case AttributionKind::feature: return "feature";
    case AttributionKind::structure: return "structure";
    }
    return "?";
}

AttributionKind parse_attribution_kind(const std::string& s) {
    if (s == "component") return AttributionKind::component;
    if (s == "feature") return AttributionKind::feature;
    if (s == "structure") return AttributionKind::structure;
    throw Error("attribution kind must be component, feature or structure");
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

std::string make_manifest(const std::string& verb, const RunId& run, const Config& config) {
    std::map<std::string, std::string> values = config.resolved();
    values[std::string(manifest_prefix) + "verb"] = verb;
    values[std::string(manifest_prefix) + "run"] = run.name;
    values[std::string(manifest_prefix) + "seed"] = std::to_string(run.seed);
    return Config::serialize(values);
}

Manifest parse_manifest(const std::string& text) {
    const Config all = Config::parse(text, "manifest");
    Manifest m;
    const std::string p = manifest_prefix;
    for (const auto& [k, v] : all.values()) {
        if (k.rfind(p, 0) == 0) continue;
        m.config.set(k, v);
    }
    if (!all.has(p + "verb") || !all.has(p + "run") || !all.has(p + "seed")) {
        throw FormatError("manifest lacks its run coordinates");
    }
    m.verb = all.get_string(p + "verb", "");
    m.run = {all.get_string(p + "run", ""), all.get_u64(p + "seed", 0)};
    return m;
}

json run_generate(const PipelineContext& ctx) {
    const Config& c = ctx.config;
    const std::string preset = c.get_string("preset", "citation");
    Graph g;
    json extra;
    if (preset == "bundle") {
        const std::string dir = c.get_string("bundle", "");
        if (dir.empty()) throw Error("preset=bundle needs bundle=<dir>");
        g = load_graph_bundle(dir);
    } else {
        SyntheticSpec s = preset_spec(preset, ctx.seed);
        s.num_blocks = c.get_size("blocks", s.num_blocks);
        s.nodes_per_block = c.get_size("nodes_per_block", s.nodes_per_block);
        s.p_in = c.get_double("p_in", s.p_in);
        s.p_out = c.get_double("p_out", s.p_out);
        s.d_informative = c.get_size("d_informative", s.d_informative);
        s.d_noise = c.get_size("d_noise", s.d_noise);
        s.class_separation = c.get_double("separation", s.class_separation);
        const double ratio = c.get_double("imbalance", s.imbalance_ratio.value_or(0.0));
        s.imbalance_ratio = ratio > 0.0 ? std::optional<double>(ratio) : std::nullopt;
        s.train_fraction = c.get_double("train_fraction", s.train_fraction);
        s.val_fraction = c.get_double("val_fraction", s.val_fraction);
        s.shuffle_columns = c.get_bool("shuffle_columns", s.shuffle_columns);
        g = generate_synthetic_graph(s);
    }
    ctx.store.save_graph(g);

    std::vector<std::size_t> class_counts(g.num_classes, 0);
    for (std::size_t y : g.labels) ++class_counts[y];
    json report{{"verb", "generate"},
                {"seed", ctx.seed},
                {"config", c.resolved()},
                {"num_nodes", g.num_nodes},
                {"num_edges", undirected_edges(g)},
                {"num_classes", g.num_classes},
                {"feature_dim", g.feature_dim()},
                {"class_counts", class_counts},
                {"split", {{"train", g.nodes_in(Split::train).size()},
                           {"val", g.nodes_in(Split::val).size()},
                           {"test", g.nodes_in(Split::test).size()}}}};
    ctx.store.put_text("reports/generate.json", dump_report(report));
    ctx.store.put_text("manifests/generate.txt", make_manifest("generate", {"workspace", ctx.seed}, c));
    return report;
}

json run_train(const PipelineContext& ctx, const std::string& run) {
    const RunId id{run, ctx.seed};
    const Config& c = ctx.config;
    const Graph g = ctx.store.load_graph();
    const ModelSpec spec = spec_from(c, "arch", run_arch_default(run), g);
    TrainConfig tc;
    tc.epochs = c.get_size("epochs", tc.epochs);
    tc.adam = adam_from(c);
    tc.class_weights = class_weights_from(c, g);
    tc.oversample = c.get_bool("oversample", false);
    tc.seed = ctx.seed;
    const TrainedModel model = train_supervised(spec, g, tc);

    const Tensor logits = forward(model, g);
    json report = base_report("train", id, c);
    report["model"] = spec_json(spec);
    report["epochs"] = log_json(model.log);
    report["final_loss"] = model.log.final_loss();
    json acc;
    for (Split s : {Split::train, Split::val, Split::test}) {
        const auto nodes = g.nodes_in(s);
        if (!nodes.empty()) acc[to_string(s)] = accuracy_percent(logits, g.labels, nodes);
    }
    report["accuracy"] = acc;
    const auto test = g.nodes_in(Split::test);
    if (g.num_classes == 2 && !test.empty()) {
        std::vector<std::size_t> y;
        for (std::size_t v : test) y.push_back(g.labels[v]);
        report["binary"] = binary_json(classification_metrics(positive_scores(logits, test), y));
    }
    ctx.store.put_model(id, "model", model);
    finish(ctx, id, "train", report, "train");
    return report;
}

json run_distill(const PipelineContext& ctx, const std::string& run) {
    const RunId id{run, ctx.seed};
    DistillOutcome out = distill_outcome(ctx, id, ctx.config.get_string("mode", "offline"));
    for (const auto& [k, m] : out.models) ctx.store.put_model(id, k, m);
    ctx.store.put_report(id, "distill", dump_report(out.report));
    ctx.store.put_manifest(id, "distill", make_manifest("distill", id, ctx.config));
    return out.report;
}

json run_replay(const ArtifactStore& store, const RunId& run) {
    const Manifest m = parse_manifest(store.get_manifest(run, "distill"));
    if (m.verb != "distill" || !(m.run == run)) throw FormatError("distill manifest does not describe this run");
    const std::string mode = m.config.get_string("mode", "");
    PipelineContext ctx{store, m.config, run.seed};
    DistillOutcome out = distill_outcome(ctx, run, mode);

    json finals = json::object();
    bool identical = true;
    for (const auto& [k, model] : out.models) {
        if (k == "teacher") continue;
        const TrainedModel stored = store.get_model(run, k);
        const bool same = stored.log.final_loss() == model.log.final_loss() && stored.params == model.params;
        identical = identical && same;
        finals[k] = {{"stored", stored.log.final_loss()}, {"replayed", model.log.final_loss()}, {"identical", same}};
    }
    json report{{"verb", "distill"},
                {"mode", "replay"},
                {"run", run.name},
                {"seed", run.seed},
                {"replayed_mode", mode},
                {"final_loss", finals},
                {"config_identical", ctx.config.resolved() == m.config.values()},
                {"identical", identical}};
    store.put_report(run, "replay", dump_report(report));
    return report;
}

json run_attribute(const PipelineContext& ctx, const std::string& run, AttributionKind kind) {
    const RunId id{run, ctx.seed};
    const Graph g = ctx.store.load_graph();
    json report;
    switch (kind) {
    case AttributionKind::component: report = attribute_component(ctx, id, g); break;
    case AttributionKind::feature: report = attribute_feature(ctx, id, g); break;
    case AttributionKind::structure: report = attribute_structure(ctx, id, g); break;
    }
    // the config snapshot in the report is taken before the verb finished reading
    report["config"] = ctx.config.resolved();
    finish(ctx, id, to_string(kind), report, "attribute");
    return report;
}

json run_eval(const PipelineContext& ctx, const std::string& run) {
    const RunId id{run, ctx.seed};
    const Config& c = ctx.config;
    const Graph g = ctx.store.load_graph();
    const RunId teacher_run{c.get_string("teacher", run), c.get_u64("teacher_seed", ctx.seed)};
    const std::string teacher_artifact =
        c.get_string("teacher_artifact", ctx.store.has(teacher_run, "teacher.ckpt") ? "teacher" : "model");
    const std::string student_artifact = c.get_string("student_artifact", "student");
    const std::vector<std::size_t> mask = mask_nodes(g, c.get_string("mask", "test"));
    for (const auto& [r, a] : {std::pair{teacher_run, teacher_artifact}, std::pair{id, student_artifact}}) {
        if (!ctx.store.has(r, a + ".ckpt")) throw Error(r.dir_name() + "/" + a + ".ckpt not found");
    }
    const TrainedModel teacher = ctx.store.get_model(teacher_run, teacher_artifact);
    const TrainedModel student = ctx.store.get_model(id, student_artifact);
    check_model_fits(teacher, g, "teacher");
    check_model_fits(student, g, "student");

    json report = base_report("eval", id, c);
    report["teacher"] = spec_json(teacher.spec);
    report["student"] = spec_json(student.spec);
    report["fidelity"] = fidelity_json(evaluate_fidelity(teacher, student, g, mask));
    finish(ctx, id, "eval", report, "eval");
    return report;
}

json run_export(const PipelineContext& ctx, const std::string& run) {
    const RunId id{run, ctx.seed};
    const std::vector<std::string> what = ctx.config.get_list("what", {"ranks", "interaction", "projection"});
    json files = json::array();
    for (const std::string& w : what) {
        std::ostringstream out;
        out.precision(17);
        std::string name;
        if (w == "ranks") {
            const Tensor r = ctx.store.get_tensor(id, "ranks");
            NodeRanks ranks;
            ranks.scores = r.data();
            out << export_ranks(ranks);
            name = "ranks.txt";
        } else if (w == "interaction") {
            const CsrMatrix a = ctx.store.get_matrix(id, "interaction");
            for (std::size_t dst = 0; dst < a.rows; ++dst) {
                for (std::size_t e = a.row_ptr[dst]; e < a.row_ptr[dst + 1]; ++e) {
                    out << a.col[e] << ' ' << dst << ' ' << a.val[e] << '\n';
                }
            }
            name = "interaction.txt";
        } else if (w == "projection") {
            const Tensor p = ctx.store.get_tensor(id, "projection");
            for (std::size_t r = 0; r < p.rows(); ++r) out << r << ' ' << p(r, 0) << ' ' << p(r, 1) << '\n';
            name = "projection.txt";
        } else {
            throw Error("export item must be ranks, interaction or projection");
        }
        const std::string text = out.str();
        ctx.store.put_text(std::filesystem::path("runs") / id.dir_name() / "exports" / name, text);
        files.push_back({{"file", "exports/" + name},
                         {"bytes", text.size()},
                         {"fnv1a64", fnv1a64(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())}});
    }
    json report = base_report("export", id, ctx.config);
    report["files"] = std::move(files);
    finish(ctx, id, "export", report, "export");
    return report;
}

} // namespace pgx
