#include "pgx/projection.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <iostream>
#include <random>
#include <vector>

namespace pgx {

const char* to_string(ProjectionMethod m) { return m == ProjectionMethod::pca ? "pca" : "tsne"; }

ProjectionMethod parse_projection_method(const std::string& s) {
    if (s == "pca") return ProjectionMethod::pca;
    if (s == "tsne") return ProjectionMethod::tsne;
    throw Error("unknown projection '" + s + "' (expected pca or tsne)");
}

void ProjectionConfig::validate(std::size_t n) const {
    if (n < 3) {
        throw Error("projection needs at least 3 points");
    }
    if (method == ProjectionMethod::tsne) {
        if (n > tsne_max_points) {
            throw Error("exact t-SNE is limited to " + std::to_string(tsne_max_points) + " points");
        }
        if (!(perplexity > 0.0) || !(perplexity < static_cast<double>(n - 1) / 3.0)) {
            throw Error("t-SNE perplexity must be positive and below (N - 1) / 3");
        }
        if (learning_rate < 0.0) {
            throw Error("t-SNE learning rate must be nonnegative");
        }
        if (iterations == 0) {
            throw Error("t-SNE needs at least one iteration");
        }
    }
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Projection pca(const Tensor& h) {
    const auto n = static_cast<Eigen::Index>(h.rows());
    const auto d = static_cast<Eigen::Index>(h.cols());
    Eigen::Map<const RowMatrix> x(h.data().data(), n, d);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Projection out;
    out.coords = Tensor(h.rows(), 2);
    if (d == 0 || cov.trace() <= 0.0) {
        out.degenerate = true;
        std::cerr << "warning: projection input has zero variance; returning zeros\n";
        return out;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // eigenvalues ascend
    for (Eigen::Index c = 0; c < 2 && c < d; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < d; ++i) {
            if (std::abs(v(i)) > std::abs(v(arg))) {
                arg = i;
            }
        }
        if (v(arg) < 0.0) {
            v = -v;
        }
        const Eigen::VectorXd proj = centered * v;
        for (Eigen::Index r = 0; r < n; ++r) {
            out.coords(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = proj(r);
        }
    }
    return out;
}

/// Conditional affinities p_{j|i} matching the perplexity by bisection on beta = 1 / (2 sigma^2).
std::vector<double> affinities(const std::vector<double>& dist2, std::size_t n, double perplexity) {
    std::vector<double> p(n * n, 0.0);
    const double target = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        for (int step = 0; step < 100; ++step) {
            double sum = 0.0;
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = std::exp(-beta * dist2[i * n + j]);
                p[i * n + j] = w;
                sum += w;
                weighted += w * dist2[i * n + j];
            }
            if (sum <= 0.0) {
                hi = beta;
                beta = (lo + hi) / 2.0;
                continue;
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) {
                p[i * n + j] /= sum;
            }
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) {
                break;
            }
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (lo + hi) / 2.0;
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
        }
    }
    return p;
}

Projection tsne(const Tensor& h, const ProjectionConfig& cfg) {
    const std::size_t n = h.rows();
    std::vector<double> dist2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < h.cols(); ++c) {
                const double diff = h(i, c) - h(j, c);
                s += diff * diff;
            }
            dist2[i * n + j] = s;
            dist2[j * n + i] = s;
        }
    }
    const std::vector<double> cond = affinities(dist2, n, cfg.perplexity);
    std::vector<double> p(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
        }
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, 1e-4);
    std::vector<double> y(n * 2);
    for (double& v : y) {
        v = init(rng);
    }
    std::vector<double> velocity(n * 2, 0.0);
    std::vector<double> gains(n * 2, 1.0);
    std::vector<double> num(n * n);
    std::vector<double> grad(n * 2);
    const double lr = cfg.learning_rate > 0.0 ? cfg.learning_rate
                                              : std::max(static_cast<double>(n) / 48.0, 50.0);
    const std::size_t exaggeration_end = std::min<std::size_t>(250, cfg.iterations / 4);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double exaggeration = it < exaggeration_end ? 12.0 : 1.0;
        const double momentum = it < exaggeration_end ? 0.5 : 0.8;
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[2 * i] - y[2 * j];
                const double dy = y[2 * i + 1] - y[2 * j + 1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = std::max(num[i * n + j] / z, 1e-12);
                const double mult = 4.0 * (exaggeration * p[i * n + j] - q) * num[i * n + j];
                grad[2 * i] += mult * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for (std::size_t k = 0; k < y.size(); ++k) {
            const bool same_sign = (grad[k] > 0.0) == (velocity[k] > 0.0);
            gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
            velocity[k] = momentum * velocity[k] - lr * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
    }
    Projection out;
    out.coords = Tensor(n, 2, std::move(y));
    return out;
}

} // namespace

Projection project_embeddings(const Tensor& h, const ProjectionConfig& cfg) {
    cfg.validate(h.rows());
    if (!h.all_finite()) {
        throw Error("projection input contains non-finite values");
    }
    return cfg.method == ProjectionMethod::pca ? pca(h) : tsne(h, cfg);
}

} // namespace pgx
