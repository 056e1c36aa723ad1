#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pgx/autodiff.hpp"

namespace pgx {

struct AdamConfig {
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::size_t step = 0;
};

OptimizerState make_adam_state(std::span<const Tensor> params, const AdamConfig& config);

/// Bias-corrected Adam update with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose +/- eps probes land on different sides of a kink.
    std::size_t skipped = 0;
};

/// Builds a scalar on the tape from leaf Vars holding the parameters.
using ScalarProgram = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Compares reverse-mode gradients against central differences
/// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps). The relative error of a
/// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-5).
GradCheckReport finite_difference_check(const ScalarProgram& fn, std::vector<Tensor> params,
                                        double eps = 1e-5);

} // namespace pgx
