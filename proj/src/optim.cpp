#include "pgx/optim.hpp"

#include <algorithm>
#include <cmath>

namespace pgx {

OptimizerState make_adam_state(std::span<const Tensor> params, const AdamConfig& config) {
    OptimizerState s;
    s.config = config;
    for (const Tensor& p : params) {
        s.first_moment.emplace_back(p.rows(), p.cols());
        s.second_moment.emplace_back(p.rows(), p.cols());
    }
    return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ShapeError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k], grads[k], "adam_step");
        require_same_shape(params[k], state.first_moment[k], "adam_step");
    }
    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].data();
        const auto& g = grads[k].data();
        auto& m = state.first_moment[k].data();
        auto& v = state.second_moment[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * (mhat / (std::sqrt(vhat) + c.epsilon) + c.weight_decay * p[i]);
        }
    }
}

namespace {

struct Probe {
    double value;
    std::uint64_t signature;
};

Probe evaluate(const ScalarProgram& fn, const std::vector<Tensor>& params) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) {
        vars.push_back(tape.constant(p));
    }
    const ad::Var out = fn(tape, vars);
    return {out.value().item(), tape.kink_signature()};
}

} // namespace

GradCheckReport finite_difference_check(const ScalarProgram& fn, std::vector<Tensor> params,
                                        double eps) {
    if (!(eps > 0.0)) {
        throw Error("finite_difference_check: eps must be positive");
    }
    std::vector<Tensor> analytic;
    std::uint64_t base_signature = 0;
    {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const Tensor& p : params) {
            vars.push_back(tape.variable(p));
        }
        const ad::Var out = fn(tape, vars);
        tape.backward(out);
        base_signature = tape.kink_signature();
        for (const ad::Var& v : vars) {
            analytic.push_back(tape.grad(v));
        }
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double original = params[k][i];
            params[k][i] = original + eps;
            const Probe plus = evaluate(fn, params);
            params[k][i] = original - eps;
            const Probe minus = evaluate(fn, params);
            params[k][i] = original;
            if (plus.signature != base_signature || minus.signature != base_signature) {
                ++report.skipped;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * eps);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-5});
            report.max_relative_error =
                std::max(report.max_relative_error, std::abs(a - numeric) / denom);
            ++report.checked;
        }
    }
    return report;
}

} // namespace pgx
