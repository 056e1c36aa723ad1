#pragma once

#include <cstdint>
#include <string>

#include "pgx/tensor.hpp"

namespace pgx {

enum class ProjectionMethod { pca, tsne };

const char* to_string(ProjectionMethod m);
ProjectionMethod parse_projection_method(const std::string& s);

struct ProjectionConfig {
    ProjectionMethod method = ProjectionMethod::pca;
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    /// 0 picks max(N / 48, 50).
    double learning_rate = 0.0;
    std::uint64_t seed = 0;

    void validate(std::size_t n) const;
};

inline constexpr std::size_t tsne_max_points = 5000;

struct Projection {
    Tensor coords;  // N x 2
    /// Zero variance input: coordinates are all zero.
    bool degenerate = false;
};

/// pca: top two principal components, each oriented so its largest-magnitude
/// loading is positive. tsne: exact O(N^2) t-SNE, seeded.
Projection project_embeddings(const Tensor& h, const ProjectionConfig& cfg = {});

} // namespace pgx
