#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgx/autodiff.hpp"
#include "pgx/graph.hpp"
#include "pgx/optim.hpp"

namespace pgx {

enum class Architecture { mlp, gcn, gat, sgat, appnp, graphsage, gcn_lpa };

const char* to_string(Architecture a);
Architecture parse_architecture(const std::string& s);
/// SGAT and GCN-LPA expose a row-stochastic interaction matrix.
bool has_interaction_structure(Architecture a);

enum class Activation { relu, elu };

struct ModelSpec {
    Architecture arch = Architecture::gcn;
    /// input, hidden..., output.
    std::vector<std::size_t> layer_sizes;
    /// GAT heads on hidden layers; the output layer uses output_heads (averaged).
    std::size_t heads = 8;
    std::size_t output_heads = 1;
    /// APPNP propagation.
    std::size_t propagation_steps = 10;
    double teleport = 0.1;
    /// GCN-LPA auxiliary label propagation.
    std::size_t lpa_iterations = 5;
    double lpa_weight = 1.0;
    double dropout = 0.5;
    double attention_slope = 0.2;
    /// Defaults to ELU for attention models and ReLU otherwise.
    std::optional<Activation> activation;

    Activation resolved_activation() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    void validate() const;

    /// key=value lines, one per field.
    std::string serialize() const;
    static ModelSpec deserialize(const std::string& text);

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// input -> hidden -> classes with the per-architecture defaults.
ModelSpec default_model_spec(Architecture arch, std::size_t input_dim, std::size_t num_classes,
                             std::size_t hidden = 64);

struct Parameter {
    std::string name;
    Tensor value;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct EpochRecord {
    double total = 0.0;
    std::map<std::string, double> components;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;

    std::vector<double> loss_curve() const;
    double final_loss() const;

    friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

struct TrainedModel {
    ModelSpec spec;
    std::vector<Parameter> params;
    TrainingLog log;
    std::uint64_t seed = 0;
    /// GCN-LPA only: the edge pattern (adjacency plus self-loops) that the
    /// learned edge logits are indexed by.
    CsrMatrix edge_pattern;

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
    std::vector<Tensor> param_values() const;
    void set_param_values(std::vector<Tensor> values);

    friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// Operators derived from a graph's structure, shared by every forward pass.
struct GraphOperators {
    CsrMatrix sym;             // D^-1/2 (A+I) D^-1/2
    CsrMatrix mean_neighbors;  // D^-1 A without self-loops; empty rows stay zero
    CsrMatrix attention;       // pattern of A plus self-loops, values 1

    static GraphOperators build(const Graph& g);
};

struct ForwardOptions {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    /// SGAT / GCN-LPA: replaces the learned interaction matrix by these values.
    /// Must share the attention pattern.
    const CsrMatrix* fixed_coefficients = nullptr;
};

struct ForwardResult {
    ad::Var logits;
    ad::Var embeddings;
    /// Row-stochastic edge values on GraphOperators::attention (SGAT, GCN-LPA).
    std::optional<ad::Var> interaction;
};

/// Builds the forward pass on `tape`. `params` are leaf Vars in the order of
/// TrainedModel::params.
ForwardResult forward_on_tape(ad::Tape& tape, const TrainedModel& model,
                              std::span<const ad::Var> params, const GraphOperators& ops,
                              ad::Var features, const ForwardOptions& options = {});

/// Label-propagation loss of GCN-LPA on the tape: Y0 = one-hot train labels,
/// Y <- A* Y for T steps with train rows reset after every step but the last,
/// scored by -log Y[i, y_i] on the train rows.
ad::Var lpa_loss_on_tape(ad::Tape& tape, const CsrMatrix& pattern, ad::Var interaction,
                         const Graph& graph, std::span<const std::size_t> train_rows,
                         std::size_t iterations);

/// Glorot-uniform weights, zero biases, zero edge logits; deterministic per seed.
TrainedModel init_model(const ModelSpec& spec, const Graph& graph, std::uint64_t seed);

/// Eval-mode logits (N x C).
Tensor forward(const TrainedModel& model, const Graph& graph, const Tensor& features);
Tensor forward(const TrainedModel& model, const Graph& graph);
Tensor forward_with_coefficients(const TrainedModel& model, const Graph& graph,
                                 const Tensor& features, const CsrMatrix& coefficients);

/// Eval-mode logits of an MLP on arbitrary feature rows (no graph needed).
Tensor forward_rows(const TrainedModel& model, const Tensor& features);

/// Eval-mode pre-classifier representations.
Tensor node_embeddings(const TrainedModel& model, const Graph& graph);

/// Eval-mode GCN-LPA label propagation loss on the graph's train mask.
double lpa_loss(const TrainedModel& model, const Graph& graph);

struct TrainConfig {
    std::size_t epochs = 200;
    AdamConfig adam;
    /// Empty means unweighted.
    std::vector<double> class_weights;
    bool oversample = false;
    std::uint64_t seed = 0;
};

TrainedModel train_supervised(const ModelSpec& spec, const Graph& graph, const TrainConfig& config);

struct InteractionMatrix {
    CsrMatrix matrix;
    std::string source;

    /// Rows sum to 1 within 1e-9 and entries are nonnegative.
    void validate() const;
};

/// SGAT: shared attention coefficients. GCN-LPA: masked softmax of learned
/// edge logits. Any other architecture throws.
InteractionMatrix extract_interaction_matrix(const TrainedModel& model, const Graph& graph);

// ---- training machinery reused by distillation ----------------------------

struct LossTerms {
    ad::Var total;
    std::map<std::string, double> components;
};

/// Adds task-specific terms to a forward pass. `epoch` starts at 0.
using LossBuilder = std::function<LossTerms(ad::Tape&, const ForwardResult&,
                                            const GraphOperators&, std::size_t epoch)>;

/// One model under full-batch Adam training.
class TrainingSession {
public:
    TrainingSession(TrainedModel model, const Graph& graph, const Tensor& features,
                    const AdamConfig& adam);

    /// Forward in train mode, backward, Adam update; appends to the log.
    EpochRecord step(std::size_t epoch, const LossBuilder& loss);
    /// Eval-mode logits with the current parameters.
    Tensor logits() const;

    const TrainedModel& model() const noexcept { return model_; }
    TrainedModel release() && { return std::move(model_); }

private:
    TrainedModel model_;
    const Graph* graph_;
    const Tensor* features_;
    GraphOperators ops_;
    OptimizerState optimizer_;
};

/// Cross entropy on `rows` plus, for GCN-LPA, the weighted LPA term.
LossTerms supervised_terms(ad::Tape& tape, const ForwardResult& fr, const TrainedModel& model,
                           const Graph& graph, const GraphOperators& ops,
                           std::span<const std::size_t> rows,
                           std::span<const double> class_weights);

/// Training rows for a config: the train mask, oversampled when requested.
std::vector<std::size_t> training_rows(const Graph& graph, bool oversample, std::uint64_t seed);

/// Per-epoch dropout seed derived from the run seed.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

} // namespace pgx
