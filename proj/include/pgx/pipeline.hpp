#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "pgx/config.hpp"
#include "pgx/store.hpp"

namespace pgx {

/// Inputs shared by every verb. The verbs read their settings from `config`
/// and record the values used; reports carry that resolved configuration.
struct PipelineContext {
    ArtifactStore store;
    Config config;
    std::uint64_t seed = 0;
};

enum class AttributionKind { component, feature, structure };

const char* to_string(AttributionKind k);
AttributionKind parse_attribution_kind(const std::string& s);

/// Writes the graph bundle (synthetic preset or imported bundle) to the workspace.
nlohmann::json run_generate(const PipelineContext& ctx);
/// Supervised training; writes model.ckpt.
nlohmann::json run_train(const PipelineContext& ctx, const std::string& run);
/// Setting mode=offline (default) writes student.ckpt and a teacher.ckpt copy;
/// mode=online writes participant<i>.ckpt.
nlohmann::json run_distill(const PipelineContext& ctx, const std::string& run);
/// Re-runs the distillation recorded in the run's manifest without touching
/// stored artifacts and compares final losses.
nlohmann::json run_replay(const ArtifactStore& store, const RunId& run);
nlohmann::json run_attribute(const PipelineContext& ctx, const std::string& run, AttributionKind kind);
/// Fidelity of a stored student against a stored teacher.
nlohmann::json run_eval(const PipelineContext& ctx, const std::string& run);
/// Text exports of ranks, interaction edges and projection coordinates under
/// the run's exports/ directory.
nlohmann::json run_export(const PipelineContext& ctx, const std::string& run);

/// Two-space indented JSON with sorted keys and a trailing newline.
std::string dump_report(const nlohmann::json& report);

/// Manifest text: the run coordinates followed by the resolved configuration.
std::string make_manifest(const std::string& verb, const RunId& run, const Config& config);

struct Manifest {
    std::string verb;
    RunId run;
    Config config;
};

Manifest parse_manifest(const std::string& text);

} // namespace pgx
