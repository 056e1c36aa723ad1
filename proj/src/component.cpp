#include "pgx/component.hpp"

#include <cmath>

#include "pgx/metrics.hpp"

namespace pgx {

const char* to_string(Component c) { return c == Component::features ? "features" : "structure"; }

Component parse_component(const std::string& s) {
    if (s == "features" || s == "feature") return Component::features;
    if (s == "structure") return Component::structure;
    throw Error("unknown component '" + s + "' (expected features or structure)");
}

Graph substitute_component(const Graph& graph, Component component, const FeatureReference& ref) {
    if (component == Component::structure) {
        return make_reference_graph(graph);
    }
    Graph g = graph;
    g.features = make_reference_features(graph, ref);
    return g;
}

namespace {

std::string describe_reference(Component component, const FeatureReference& ref) {
    return component == Component::structure ? "self_loops" : ref.describe();
}

void require_nodes(std::span<const std::size_t> nodes, const Graph& graph) {
    if (nodes.empty()) {
        throw Error("component attribution needs at least one node");
    }
    for (std::size_t v : nodes) {
        if (v >= graph.num_nodes) {
            throw Error("node " + std::to_string(v) + " is out of range");
        }
    }
}

ComponentAttribution attribute(const Tensor& intact, const Tensor& substituted, const Graph& graph,
                               Component component, const FeatureReference& ref,
                               std::span<const std::size_t> nodes) {
    const Tensor p = ad::softmax_with_temperature(intact, 1.0);
    const Tensor q = ad::softmax_with_temperature(substituted, 1.0);
    const auto pred = argmax_rows(intact);
    ComponentAttribution out;
    out.component = component;
    out.reference = describe_reference(component, ref);
    out.nodes.assign(nodes.begin(), nodes.end());
    double total = 0.0;
    for (std::size_t v : nodes) {
        const double phi = p(v, pred[v]) - q(v, pred[v]);
        out.phi.push_back(phi);
        total += std::abs(phi);
    }
    out.mc = total / static_cast<double>(nodes.size());
    out.delta_acc = accuracy_percent(intact, graph.labels, nodes) -
                    accuracy_percent(substituted, graph.labels, nodes);
    return out;
}

} // namespace

ComponentAttribution marginal_contribution(const TrainedModel& model, const Graph& graph,
                                           Component component, const FeatureReference& ref,
                                           std::span<const std::size_t> nodes) {
    require_nodes(nodes, graph);
    const Graph sub = substitute_component(graph, component, ref);
    return attribute(forward(model, graph), forward(model, sub), graph, component, ref, nodes);
}

double delta_accuracy(const TrainedModel& model, const Graph& graph, Component component,
                      const FeatureReference& ref, std::span<const std::size_t> mask) {
    require_nodes(mask, graph);
    const Graph sub = substitute_component(graph, component, ref);
    return accuracy_percent(forward(model, graph), graph.labels, mask) -
           accuracy_percent(forward(model, sub), graph.labels, mask);
}

std::vector<ComponentAttribution> component_report(const TrainedModel& model, const Graph& graph,
                                                   const FeatureReference& ref,
                                                   std::span<const std::size_t> nodes) {
    require_nodes(nodes, graph);
    const Tensor intact = forward(model, graph);
    std::vector<ComponentAttribution> out;
    for (Component c : {Component::features, Component::structure}) {
        const Graph sub = substitute_component(graph, c, ref);
        out.push_back(attribute(intact, forward(model, sub), graph, c, ref, nodes));
    }
    return out;
}

} // namespace pgx
