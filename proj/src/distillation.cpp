#include "pgx/distillation.hpp"

#include <cmath>

namespace pgx {

const char* to_string(Exposure e) { return e == Exposure::train_only ? "train_only" : "all_nodes"; }

Exposure parse_exposure(const std::string& s) {
    if (s == "train_only") return Exposure::train_only;
    if (s == "all_nodes") return Exposure::all_nodes;
    throw Error("unknown exposure '" + s + "' (expected train_only or all_nodes)");
}

const char* to_string(EnsembleTarget t) { return t == EnsembleTarget::peer_mean ? "peer_mean" : "all_mean"; }

EnsembleTarget parse_ensemble_target(const std::string& s) {
    if (s == "peer_mean") return EnsembleTarget::peer_mean;
    if (s == "all_mean") return EnsembleTarget::all_mean;
    throw Error("unknown ensemble target '" + s + "' (expected peer_mean or all_mean)");
}

void KDConfig::validate() const {
    if (!(temperature > 0.0)) {
        throw Error("distillation temperature must be positive");
    }
    if (!(lambda >= 0.0)) {
        throw Error("distillation weight lambda must be nonnegative");
    }
    if (epochs == 0) {
        throw Error("distillation needs at least one epoch");
    }
}

void OnlineKDConfig::validate() const {
    if (!(temperature > 0.0)) {
        throw Error("online distillation temperature must be positive");
    }
    if (!(mlp_loss_factor > 0.0)) {
        throw Error("mlp_loss_factor must be positive");
    }
    if (epochs == 0) {
        throw Error("online distillation needs at least one epoch");
    }
}

std::uint64_t OnlineKDConfig::seed_of(std::size_t participant) const {
    return participant < seeds.size() ? seeds[participant] : seed + participant;
}

TrainedModel distill_from_logits(const Tensor& teacher_logits, const ModelSpec& student_spec,
                                 const Graph& graph, const KDConfig& kd,
                                 std::optional<TrainedModel> init) {
    kd.validate();
    if (teacher_logits.rows() != graph.num_nodes || teacher_logits.cols() != graph.num_classes) {
        throw ShapeError("teacher logits must be num_nodes x num_classes");
    }
    const std::vector<std::size_t> rows = training_rows(graph, kd.oversample, kd.seed);
    const std::vector<std::size_t> exposed =
        kd.exposure == Exposure::all_nodes ? graph.all_nodes() : graph.nodes_in(Split::train);
    const Tensor soft = ad::softmax_with_temperature(teacher_logits, kd.temperature);
    const double weight =
        kd.lambda * (kd.scale_by_tau_squared ? kd.temperature * kd.temperature : 1.0);

    TrainedModel start;
    if (init) {
        if (!(init->spec == student_spec)) {
            throw Error("warm-start model does not match the student spec");
        }
        start = std::move(*init);
        start.log = {};
    } else {
        start = init_model(student_spec, graph, kd.seed);
    }
    TrainingSession session(std::move(start), graph, graph.features, kd.adam);
    const LossBuilder builder = [&](ad::Tape& tape, const ForwardResult& fr, const GraphOperators& ops,
                                    std::size_t) {
        LossTerms terms = supervised_terms(tape, fr, session.model(), graph, ops, rows, kd.class_weights);
        // lambda = 0 leaves the supervised trajectory untouched
        if (kd.lambda > 0.0) {
            const ad::Var kl = ad::kl_to_target(fr.logits, soft, exposed, kd.temperature);
            terms.components["kd"] = kl.value().item();
            terms.total = ad::add(terms.total, ad::scale(kl, weight));
        }
        return terms;
    };
    for (std::size_t epoch = 0; epoch < kd.epochs; ++epoch) {
        session.step(epoch, builder);
    }
    return std::move(session).release();
}

TrainedModel distill_offline(const TrainedModel& teacher, const ModelSpec& student_spec,
                             const Graph& graph, const KDConfig& kd, std::optional<TrainedModel> init) {
    kd.validate();
    if (teacher.spec.output_dim() != student_spec.output_dim()) {
        throw ShapeError("teacher and student disagree on the class count");
    }
    return distill_from_logits(forward(teacher, graph), student_spec, graph, kd, std::move(init));
}

std::vector<TrainedModel> distill_online(const std::vector<ModelSpec>& specs, const Graph& graph,
                                         const OnlineKDConfig& cfg) {
    if (specs.empty()) {
        throw Error("online distillation needs at least one participant");
    }
    cfg.validate();
    const std::vector<std::size_t> rows = training_rows(graph, false, cfg.seed);
    const std::vector<std::size_t> everyone = graph.all_nodes();
    const double tau = cfg.temperature;

    std::vector<TrainingSession> sessions;
    sessions.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        sessions.emplace_back(init_model(specs[i], graph, cfg.seed_of(i)), graph, graph.features, cfg.adam);
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            std::vector<Tensor> peers;
            for (std::size_t j = 0; j < sessions.size(); ++j) {
                if (j != i) {
                    peers.push_back(ad::softmax_with_temperature(sessions[j].logits(), tau));
                }
            }
            std::optional<Tensor> target;
            if (cfg.target == EnsembleTarget::all_mean) {
                target = ad::softmax_with_temperature(sessions[i].logits(), tau);
                for (const Tensor& p : peers) {
                    for (std::size_t k = 0; k < p.size(); ++k) (*target)[k] += p[k];
                }
                for (double& v : target->data()) v /= static_cast<double>(peers.size() + 1);
            } else if (!peers.empty()) {
                target = Tensor(graph.num_nodes, graph.num_classes);
                for (const Tensor& p : peers) {
                    for (std::size_t k = 0; k < p.size(); ++k) (*target)[k] += p[k];
                }
                for (double& v : target->data()) v /= static_cast<double>(peers.size());
            }
            const bool is_mlp = specs[i].arch == Architecture::mlp;
            const TrainingSession& self = sessions[i];
            const LossBuilder builder = [&](ad::Tape& tape, const ForwardResult& fr,
                                            const GraphOperators& ops, std::size_t) {
                LossTerms terms = supervised_terms(tape, fr, self.model(), graph, ops, rows, {});
                if (target) {
                    const ad::Var kl = ad::kl_to_target(fr.logits, *target, everyone, tau);
                    terms.components["kd"] = kl.value().item();
                    terms.total = ad::add(terms.total, kl);
                }
                if (is_mlp && cfg.mlp_peer_kl && !peers.empty()) {
                    double peer_sum = 0.0;
                    for (const Tensor& p : peers) {
                        const ad::Var kl = ad::kl_to_target(fr.logits, p, everyone, tau);
                        peer_sum += kl.value().item();
                        terms.total = ad::add(terms.total, kl);
                    }
                    terms.components["peer_kl"] = peer_sum;
                }
                if (is_mlp && cfg.mlp_loss_factor != 1.0) {
                    terms.total = ad::scale(terms.total, cfg.mlp_loss_factor);
                }
                return terms;
            };
            sessions[i].step(epoch, builder);
        }
    }

    std::vector<TrainedModel> out;
    out.reserve(sessions.size());
    for (TrainingSession& s : sessions) {
        out.push_back(std::move(s).release());
    }
    return out;
}

} // namespace pgx
