#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every primitive in execution order, so the record is already
// topologically sorted; backward() sweeps it once in reverse. Vars are cheap
// handles (tape pointer + node index) and stay valid for the tape's lifetime.

#include <cstddef>
#include <deque>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pgx/sparse.hpp"
#include "pgx/tensor.hpp"

namespace pgx::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

class Tape {
public:
    using BackwardFn =
        std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives a gradient.
    Var variable(Tensor value);
    /// Leaf that never receives a gradient.
    Var constant(Tensor value);

    const Tensor& value(Var v) const;
    /// Accumulated gradient of a requires_grad node. Throws for detached nodes.
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    /// Seeds d(loss)/d(loss) = 1 and propagates through the record in reverse.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Hash of the branch taken by every non-smooth primitive (ReLU sign, clamp
    /// activity, ...). Two evaluations with equal signatures lie on the same
    /// smooth piece, which the finite-difference checker relies on.
    std::uint64_t kink_signature() const noexcept { return kink_signature_; }
    void record_branch(bool taken) noexcept;

    // Primitive authoring interface.
    Var push(Tensor value, std::span<const Var> inputs, BackwardFn backward);
    /// Gradient slot of node `id` during backward(); nullptr when the node does
    /// not require a gradient.
    Tensor* grad_slot(std::size_t id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var check(Var v) const;

    // deque keeps value references stable while the tape grows
    std::deque<Node> nodes_;
    std::uint64_t kink_signature_ = 1469598103934665603ULL;
    bool backward_done_ = false;
};

// ---- elementwise and dense algebra ---------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// X + 1*b for a 1xC bias row.
Var add_bias(Var x, Var bias);
Var matmul(Var a, Var b);
/// Rows of a sparse constant matrix times x.
Var spmm(const CsrMatrix& s, Var x);
Var concat_cols(std::span<const Var> parts);
Var col_slice(Var x, std::size_t start, std::size_t count);
/// out[i] = x[index[i]], or a zero row where index[i] < 0.
Var gather_rows(Var x, std::span<const std::ptrdiff_t> index);

Var relu(Var x);
Var elu(Var x, double alpha = 1.0);
Var leaky_relu(Var x, double slope = 0.2);
Var exp(Var x);
/// Natural log with inputs clamped from below at `floor`.
Var log(Var x, double floor = 1e-12);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

Var sum(Var x);
Var mean(Var x);

/// Inverted dropout; mask drawn from a generator seeded with `seed`.
Var dropout(Var x, double p, std::uint64_t seed);

// ---- sparse edge primitives ----------------------------------------------
//
// `pattern` is a CSR matrix whose stored coordinates define the edges; its
// values are ignored. Edge-valued Vars are E x k with rows in CSR order.

/// Per-edge copy of a node value: by_row picks the target (row) node, otherwise
/// the source (column) node.
Var edge_gather(const CsrMatrix& pattern, Var node_values, bool by_row);
/// Softmax over the entries of each row (a node's incident edges).
Var edge_softmax(const CsrMatrix& pattern, Var edge_scores);
/// out[i] = sum_e w[e] * x[col[e]] for the entries e of row i; w is E x 1.
Var edge_spmm(const CsrMatrix& pattern, Var edge_weights, Var x);

// ---- losses ---------------------------------------------------------------

/// Mean over `rows` of w[y] * -log softmax(z)[y]. `labels` is indexed by node;
/// empty `class_weights` means every weight is 1. Rows may repeat.
Var cross_entropy(Var logits, std::span<const std::size_t> rows,
                  std::span<const std::size_t> labels, std::span<const double> class_weights = {});

/// Mean over `rows` of KL(target || softmax(z / tau)); target rows are fixed.
Var kl_to_target(Var logits, const Tensor& target, std::span<const std::size_t> rows, double tau);

/// Replace the listed rows of x with fixed values (gradient stops there).
Var overwrite_rows(Var x, std::span<const std::size_t> rows, const Tensor& values);

/// Mean over `rows` of -log(max(P[r, y_r], 1e-12)) for rows of probabilities.
Var nll_of_probabilities(Var probs, std::span<const std::size_t> rows,
                         std::span<const std::size_t> labels);

// ---- value-level helpers --------------------------------------------------

/// Row-wise softmax of z / tau with max subtraction. Throws for tau <= 0.
Tensor softmax_with_temperature(const Tensor& logits, double tau);
/// Cross entropy at tau = 1 over every row of `logits`.
double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                     std::span<const double> class_weights = {});
/// Mean over rows of sum_i p_i ln(p_i / q_i), with 0 ln 0 = 0 and q clamped at 1e-12.
double kl_divergence(const Tensor& p, const Tensor& q);

} // namespace pgx::ad
