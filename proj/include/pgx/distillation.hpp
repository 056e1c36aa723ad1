#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgx/models.hpp"

namespace pgx {

enum class Exposure { train_only, all_nodes };

const char* to_string(Exposure e);
Exposure parse_exposure(const std::string& s);

struct KDConfig {
    double temperature = 2.0;
    double lambda = 1.0;
    std::size_t epochs = 200;
    /// Nodes that receive the soft-target term; cross entropy always uses the train mask.
    Exposure exposure = Exposure::all_nodes;
    AdamConfig adam;
    std::uint64_t seed = 0;
    /// Multiply the soft-target term by tau^2.
    bool scale_by_tau_squared = false;
    std::vector<double> class_weights;
    bool oversample = false;

    void validate() const;
};

/// Epoch count for MLP students when none is configured explicitly.
inline constexpr std::size_t mlp_student_epochs = 1000;

/// Student trained on CE(y, p(z_s, 1)) over the train mask plus
/// lambda * KL(p(z_t, tau) || p(z_s, tau)) over the exposure set. Teacher logits
/// are computed once in eval mode. `init` replaces the seeded initialization.
TrainedModel distill_offline(const TrainedModel& teacher, const ModelSpec& student_spec,
                             const Graph& graph, const KDConfig& kd,
                             std::optional<TrainedModel> init = std::nullopt);

/// Same loss against precomputed teacher logits; `graph` supplies the student's
/// inputs (which may be a reduced feature set).
TrainedModel distill_from_logits(const Tensor& teacher_logits, const ModelSpec& student_spec,
                                 const Graph& graph, const KDConfig& kd,
                                 std::optional<TrainedModel> init = std::nullopt);

enum class EnsembleTarget {
    /// Mean of the other participants' softened probabilities.
    peer_mean,
    /// Mean over every participant including the one being updated (held fixed).
    all_mean,
};

const char* to_string(EnsembleTarget t);
EnsembleTarget parse_ensemble_target(const std::string& s);

struct OnlineKDConfig {
    /// Peers exchange plain probabilities by default.
    double temperature = 1.0;
    std::size_t epochs = 200;
    AdamConfig adam;
    std::uint64_t seed = 0;
    /// Participant i is initialized with seeds[i], or seed + i when absent.
    std::vector<std::uint64_t> seeds;
    EnsembleTarget target = EnsembleTarget::peer_mean;
    /// MLP participants: total loss multiplied by this factor.
    double mlp_loss_factor = 1.0;
    /// MLP participants: add KL(peer || self) for every peer.
    bool mlp_peer_kl = false;

    void validate() const;
    std::uint64_t seed_of(std::size_t participant) const;
};

/// Participants train together; in every epoch they update in list order, each
/// against the eval-mode soft outputs of the others at that moment.
std::vector<TrainedModel> distill_online(const std::vector<ModelSpec>& specs, const Graph& graph,
                                         const OnlineKDConfig& cfg);

} // namespace pgx
