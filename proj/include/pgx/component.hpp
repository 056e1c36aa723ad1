#pragma once

#include <span>
#include <string>
#include <vector>

#include "pgx/models.hpp"

namespace pgx {

/// The two interacting inputs of a node classifier.
enum class Component { features, structure };

const char* to_string(Component c);
Component parse_component(const std::string& s);

struct ComponentAttribution {
    Component component = Component::features;
    std::vector<std::size_t> nodes;
    /// p_c(intact) - p_c(substituted) per node, c = predicted class on the intact input.
    std::vector<double> phi;
    /// Mean of |phi|.
    double mc = 0.0;
    /// Accuracy drop on the same nodes, percentage points.
    double delta_acc = 0.0;
    std::string reference;
};

/// Graph with one component replaced by its reference: structure becomes the
/// self-loop graph, features become the feature reference.
Graph substitute_component(const Graph& graph, Component component, const FeatureReference& ref);

ComponentAttribution marginal_contribution(const TrainedModel& model, const Graph& graph,
                                           Component component, const FeatureReference& ref,
                                           std::span<const std::size_t> nodes);

/// 100 * (accuracy intact - accuracy substituted) on `mask`.
double delta_accuracy(const TrainedModel& model, const Graph& graph, Component component,
                      const FeatureReference& ref, std::span<const std::size_t> mask);

/// Both components on the same node set (features first).
std::vector<ComponentAttribution> component_report(const TrainedModel& model, const Graph& graph,
                                                   const FeatureReference& ref,
                                                   std::span<const std::size_t> nodes);

} // namespace pgx
