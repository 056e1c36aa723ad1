#include "pgx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace pgx::ad {

namespace {

void accumulate(Tensor* slot, const Tensor& g) {
    if (slot == nullptr) {
        return;
    }
    auto& d = slot->data();
    const auto& s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

Tape& tape_of(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (v.tape == nullptr) {
            throw Error("autodiff: uninitialised Var");
        }
        if (t != nullptr && t != v.tape) {
            throw Error("autodiff: Vars from different tapes combined");
        }
        t = v.tape;
    }
    return *t;
}

void row_softmax_inplace(std::span<double> row) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) {
        mx = std::max(mx, v);
    }
    double s = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        s += v;
    }
    for (double& v : row) {
        v /= s;
    }
}

void row_log_softmax_inplace(std::span<double> row) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) {
        mx = std::max(mx, v);
    }
    double s = 0.0;
    for (double v : row) {
        s += std::exp(v - mx);
    }
    const double lse = mx + std::log(s);
    for (double& v : row) {
        v -= lse;
    }
}

void check_rows(std::span<const std::size_t> rows, std::size_t n, const char* what) {
    for (std::size_t r : rows) {
        if (r >= n) {
            throw ShapeError(std::string(what) + ": row " + std::to_string(r) + " out of range");
        }
    }
}

} // namespace

const Tensor& Var::value() const {
    if (tape == nullptr) {
        throw Error("autodiff: uninitialised Var");
    }
    return tape->value(*this);
}

Var Tape::check(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
        throw Error("autodiff: Var does not belong to this tape");
    }
    return v;
}

Var Tape::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return nodes_[check(v).id].value; }

bool Tape::requires_grad(Var v) const { return nodes_[check(v).id].requires_grad; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[check(v).id];
    if (!n.requires_grad) {
        throw Error("autodiff: gradient requested for a detached tensor");
    }
    if (!backward_done_) {
        throw Error("autodiff: gradient requested before backward()");
    }
    return n.grad;
}

void Tape::record_branch(bool taken) noexcept {
    kink_signature_ ^= taken ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL;
    kink_signature_ *= 1099511628211ULL;
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& v : inputs) {
        needs = needs || nodes_[check(v).id].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Tensor* Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    return n.requires_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
    check(loss);
    if (nodes_[loss.id].value.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got " +
                         std::to_string(nodes_[loss.id].value.rows()) + "x" +
                         std::to_string(nodes_[loss.id].value.cols()));
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) {
            n.grad = Tensor(n.value.rows(), n.value.cols());
        }
    }
    if (Tensor* seed = grad_slot(loss.id)) {
        seed->fill(1.0);
    }
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward) {
            continue;
        }
        // The closure only writes into earlier nodes, so references stay valid.
        n.backward(*this, n.value, n.grad);
    }
    backward_done_ = true;
}

// ---- elementwise and dense algebra ---------------------------------------

Var add(Var a, Var b) {
    Tape& t = tape_of({a, b});
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b.value()[i];
    }
    const Var in[] = {a, b};
    return t.push(std::move(out), in, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
        accumulate(tp.grad_slot(a.id), g);
        accumulate(tp.grad_slot(b.id), g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of({a, b});
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b.value()[i];
    }
    const Var in[] = {a, b};
    return t.push(std::move(out), in, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
        accumulate(tp.grad_slot(a.id), g);
        if (Tensor* gb = tp.grad_slot(b.id)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] -= g[i];
            }
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of({a, b});
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b.value()[i];
    }
    const Var in[] = {a, b};
    return t.push(std::move(out), in, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
        const Tensor& av = tp.value(a);
        const Tensor& bv = tp.value(b);
        if (Tensor* ga = tp.grad_slot(a.id)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * bv[i];
            }
        }
        if (Tensor* gb = tp.grad_slot(b.id)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] += g[i] * av[i];
            }
        }
    });
}

Var scale(Var a, double factor) {
    Tape& t = tape_of({a});
    Tensor out = a.value();
    for (double& v : out.data()) {
        v *= factor;
    }
    const Var in[] = {a};
    return t.push(std::move(out), in, [a, factor](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(a.id)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += factor * g[i];
            }
        }
    });
}

Var add_bias(Var x, Var bias) {
    Tape& t = tape_of({x, bias});
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != xv.cols()) {
        throw ShapeError("add_bias: bias must be 1x" + std::to_string(xv.cols()));
    }
    Tensor out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += bv[j];
        }
    }
    const Var in[] = {x, bias};
    return t.push(std::move(out), in, [x, bias](Tape& tp, const Tensor&, const Tensor& g) {
        accumulate(tp.grad_slot(x.id), g);
        if (Tensor* gb = tp.grad_slot(bias.id)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    (*gb)[j] += g(i, j);
                }
            }
        }
    });
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of({a, b});
    Tensor out = pgx::matmul(a.value(), b.value());
    const Var in[] = {a, b};
    return t.push(std::move(out), in, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(a.id)) {
            accumulate(ga, pgx::matmul_nt(g, tp.value(b)));
        }
        if (Tensor* gb = tp.grad_slot(b.id)) {
            accumulate(gb, pgx::matmul_tn(tp.value(a), g));
        }
    });
}

Var spmm(const CsrMatrix& s, Var x) {
    Tape& t = tape_of({x});
    Tensor out = pgx::spmm(s, x.value());
    const Var in[] = {x};
    // The operator is captured by reference; callers keep it alive for the tape's lifetime.
    return t.push(std::move(out), in, [&s, x](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            accumulate(gx, pgx::spmm_t(s, g));
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    Tape& t = tape_of({parts.front()});
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        tape_of({parts.front(), p});
        if (p.rows() != rows) {
            throw ShapeError("concat_cols: row counts differ");
        }
        cols += p.cols();
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < v.cols(); ++j) {
                out(i, offset + j) = v(i, j);
            }
        }
        offset += v.cols();
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return t.push(std::move(out), parts, [saved](Tape& tp, const Tensor&, const Tensor& g) {
        std::size_t off = 0;
        for (const Var& p : saved) {
            const std::size_t c = tp.value(p).cols();
            if (Tensor* gp = tp.grad_slot(p.id)) {
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        (*gp)(i, j) += g(i, off + j);
                    }
                }
            }
            off += c;
        }
    });
}

Var col_slice(Var x, std::size_t start, std::size_t count) {
    Tape& t = tape_of({x});
    const Tensor& v = x.value();
    if (start + count > v.cols()) {
        throw ShapeError("col_slice: range exceeds column count");
    }
    Tensor out(v.rows(), count);
    for (std::size_t i = 0; i < v.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            out(i, j) = v(i, start + j);
        }
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x, start, count](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < count; ++j) {
                    (*gx)(i, start + j) += g(i, j);
                }
            }
        }
    });
}

Var gather_rows(Var x, std::span<const std::ptrdiff_t> index) {
    Tape& t = tape_of({x});
    const Tensor& v = x.value();
    Tensor out(index.size(), v.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0) {
            continue;
        }
        if (static_cast<std::size_t>(index[i]) >= v.rows()) {
            throw ShapeError("gather_rows: index out of range");
        }
        const auto src = v.row(static_cast<std::size_t>(index[i]));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    std::vector<std::ptrdiff_t> saved(index.begin(), index.end());
    const Var in[] = {x};
    return t.push(std::move(out), in,
                  [x, saved = std::move(saved)](Tape& tp, const Tensor&, const Tensor& g) {
                      if (Tensor* gx = tp.grad_slot(x.id)) {
                          for (std::size_t i = 0; i < saved.size(); ++i) {
                              if (saved[i] < 0) {
                                  continue;
                              }
                              const auto r = static_cast<std::size_t>(saved[i]);
                              for (std::size_t j = 0; j < g.cols(); ++j) {
                                  (*gx)(r, j) += g(i, j);
                              }
                          }
                      }
                  });
}

Var relu(Var x) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (double& v : out.data()) {
        t.record_branch(v > 0.0);
        v = v > 0.0 ? v : 0.0;
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            const Tensor& xv = tp.value(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xv[i] > 0.0) {
                    (*gx)[i] += g[i];
                }
            }
        }
    });
}

Var elu(Var x, double alpha) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (double& v : out.data()) {
        t.record_branch(v > 0.0);
        v = v > 0.0 ? v : alpha * std::expm1(v);
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x, alpha](Tape& tp, const Tensor& y, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            const Tensor& xv = tp.value(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gx)[i] += xv[i] > 0.0 ? g[i] : g[i] * (y[i] + alpha);
            }
        }
    });
}

Var leaky_relu(Var x, double slope) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (double& v : out.data()) {
        t.record_branch(v > 0.0);
        v = v > 0.0 ? v : slope * v;
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x, slope](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            const Tensor& xv = tp.value(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gx)[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
            }
        }
    });
}

Var exp(Var x) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (double& v : out.data()) {
        v = std::exp(v);
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x](Tape& tp, const Tensor& y, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gx)[i] += g[i] * y[i];
            }
        }
    });
}

Var log(Var x, double floor) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (double& v : out.data()) {
        t.record_branch(v > floor);
        v = std::log(std::max(v, floor));
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x, floor](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            const Tensor& xv = tp.value(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xv[i] > floor) {
                    (*gx)[i] += g[i] / xv[i];
                }
            }
        }
    });
}

Var softmax_rows(Var x) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        row_softmax_inplace(out.row(i));
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x](Tape& tp, const Tensor& y, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    dot += g(i, j) * y(i, j);
                }
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    (*gx)(i, j) += y(i, j) * (g(i, j) - dot);
                }
            }
        }
    });
}

Var log_softmax_rows(Var x) {
    Tape& t = tape_of({x});
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        row_log_softmax_inplace(out.row(i));
    }
    const Var in[] = {x};
    return t.push(std::move(out), in, [x](Tape& tp, const Tensor& y, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    gs += g(i, j);
                }
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    (*gx)(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
                }
            }
        }
    });
}

Var sum(Var x) {
    Tape& t = tape_of({x});
    double s = 0.0;
    for (double v : x.value().data()) {
        s += v;
    }
    const Var in[] = {x};
    return t.push(Tensor::scalar(s), in, [x](Tape& tp, const Tensor&, const Tensor& g) {
        if (Tensor* gx = tp.grad_slot(x.id)) {
            for (double& v : gx->data()) {
                v += g[0];
            }
        }
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) {
        throw ShapeError("mean: empty tensor");
    }
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var dropout(Var x, double p, std::uint64_t seed) {
    Tape& t = tape_of({x});
    if (p < 0.0 || p >= 1.0) {
        throw Error("dropout: probability must lie in [0, 1)");
    }
    if (p == 0.0) {
        return x;
    }
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - p);
    const double factor = 1.0 / (1.0 - p);
    Tensor mask(x.rows(), x.cols());
    for (double& m : mask.data()) {
        m = keep(rng) ? factor : 0.0;
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= mask[i];
    }
    const Var in[] = {x};
    return t.push(std::move(out), in,
                  [x, mask = std::move(mask)](Tape& tp, const Tensor&, const Tensor& g) {
                      if (Tensor* gx = tp.grad_slot(x.id)) {
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              (*gx)[i] += g[i] * mask[i];
                          }
                      }
                  });
}

// ---- sparse edge primitives ----------------------------------------------

Var edge_gather(const CsrMatrix& pattern, Var node_values, bool by_row) {
    Tape& t = tape_of({node_values});
    const Tensor& nv = node_values.value();
    const std::size_t expected = by_row ? pattern.rows : pattern.cols;
    if (nv.rows() != expected) {
        throw ShapeError("edge_gather: node value rows do not match pattern");
    }
    const std::size_t k = nv.cols();
    Tensor out(pattern.nnz(), k);
    for (std::size_t r = 0; r < pattern.rows; ++r) {
        for (std::size_t e = pattern.row_ptr[r]; e < pattern.row_ptr[r + 1]; ++e) {
            const std::size_t src = by_row ? r : pattern.col[e];
            for (std::size_t j = 0; j < k; ++j) {
                out(e, j) = nv(src, j);
            }
        }
    }
    const Var in[] = {node_values};
    return t.push(std::move(out), in,
                  [&pattern, node_values, by_row, k](Tape& tp, const Tensor&, const Tensor& g) {
                      Tensor* gn = tp.grad_slot(node_values.id);
                      if (gn == nullptr) {
                          return;
                      }
                      for (std::size_t r = 0; r < pattern.rows; ++r) {
                          for (std::size_t e = pattern.row_ptr[r]; e < pattern.row_ptr[r + 1]; ++e) {
                              const std::size_t src = by_row ? r : pattern.col[e];
                              for (std::size_t j = 0; j < k; ++j) {
                                  (*gn)(src, j) += g(e, j);
                              }
                          }
                      }
                  });
}

Var edge_softmax(const CsrMatrix& pattern, Var edge_scores) {
    Tape& t = tape_of({edge_scores});
    const Tensor& s = edge_scores.value();
    if (s.rows() != pattern.nnz()) {
        throw ShapeError("edge_softmax: score rows do not match edge count");
    }
    const std::size_t k = s.cols();
    Tensor out = s;
    for (std::size_t r = 0; r < pattern.rows; ++r) {
        const std::size_t b = pattern.row_ptr[r];
        const std::size_t e = pattern.row_ptr[r + 1];
        for (std::size_t j = 0; j < k; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = b; i < e; ++i) {
                mx = std::max(mx, out(i, j));
            }
            double z = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                out(i, j) = std::exp(out(i, j) - mx);
                z += out(i, j);
            }
            for (std::size_t i = b; i < e; ++i) {
                out(i, j) /= z;
            }
        }
    }
    const Var in[] = {edge_scores};
    return t.push(std::move(out), in,
                  [&pattern, edge_scores, k](Tape& tp, const Tensor& y, const Tensor& g) {
                      Tensor* gs = tp.grad_slot(edge_scores.id);
                      if (gs == nullptr) {
                          return;
                      }
                      for (std::size_t r = 0; r < pattern.rows; ++r) {
                          const std::size_t b = pattern.row_ptr[r];
                          const std::size_t e = pattern.row_ptr[r + 1];
                          for (std::size_t j = 0; j < k; ++j) {
                              double dot = 0.0;
                              for (std::size_t i = b; i < e; ++i) {
                                  dot += y(i, j) * g(i, j);
                              }
                              for (std::size_t i = b; i < e; ++i) {
                                  (*gs)(i, j) += y(i, j) * (g(i, j) - dot);
                              }
                          }
                      }
                  });
}

Var edge_spmm(const CsrMatrix& pattern, Var edge_weights, Var x) {
    Tape& t = tape_of({edge_weights, x});
    const Tensor& w = edge_weights.value();
    const Tensor& xv = x.value();
    if (w.rows() != pattern.nnz() || w.cols() != 1) {
        throw ShapeError("edge_spmm: edge weights must be E x 1");
    }
    if (xv.rows() != pattern.cols) {
        throw ShapeError("edge_spmm: dense rows do not match pattern columns");
    }
    const std::size_t n = xv.cols();
    Tensor out(pattern.rows, n);
    for (std::size_t r = 0; r < pattern.rows; ++r) {
        for (std::size_t e = pattern.row_ptr[r]; e < pattern.row_ptr[r + 1]; ++e) {
            const double we = w[e];
            const std::size_t c = pattern.col[e];
            for (std::size_t j = 0; j < n; ++j) {
                out(r, j) += we * xv(c, j);
            }
        }
    }
    const Var in[] = {edge_weights, x};
    return t.push(std::move(out), in,
                  [&pattern, edge_weights, x, n](Tape& tp, const Tensor&, const Tensor& g) {
                      Tensor* gw = tp.grad_slot(edge_weights.id);
                      Tensor* gx = tp.grad_slot(x.id);
                      const Tensor& wv = tp.value(edge_weights);
                      const Tensor& xval = tp.value(x);
                      for (std::size_t r = 0; r < pattern.rows; ++r) {
                          for (std::size_t e = pattern.row_ptr[r]; e < pattern.row_ptr[r + 1]; ++e) {
                              const std::size_t c = pattern.col[e];
                              if (gw != nullptr) {
                                  double d = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      d += g(r, j) * xval(c, j);
                                  }
                                  (*gw)[e] += d;
                              }
                              if (gx != nullptr) {
                                  for (std::size_t j = 0; j < n; ++j) {
                                      (*gx)(c, j) += wv[e] * g(r, j);
                                  }
                              }
                          }
                      }
                  });
}

// ---- losses ---------------------------------------------------------------

Var cross_entropy(Var logits, std::span<const std::size_t> rows,
                  std::span<const std::size_t> labels, std::span<const double> class_weights) {
    Tape& t = tape_of({logits});
    const Tensor& z = logits.value();
    if (rows.empty()) {
        throw ShapeError("cross_entropy: no rows selected");
    }
    if (labels.size() != z.rows()) {
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " does not match logit rows " + std::to_string(z.rows()));
    }
    if (!class_weights.empty() && class_weights.size() != z.cols()) {
        throw ShapeError("cross_entropy: class weight count does not match classes");
    }
    check_rows(rows, z.rows(), "cross_entropy");
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    Tensor logp(rows.size(), z.cols());
    double loss = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t r = rows[k];
        const std::size_t y = labels[r];
        if (y >= z.cols()) {
            throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range");
        }
        auto lp = logp.row(k);
        std::copy(z.row(r).begin(), z.row(r).end(), lp.begin());
        row_log_softmax_inplace(lp);
        const double w = class_weights.empty() ? 1.0 : class_weights[y];
        loss -= w * lp[y];
    }
    loss *= inv_n;
    std::vector<std::size_t> saved_rows(rows.begin(), rows.end());
    std::vector<std::size_t> saved_labels(labels.begin(), labels.end());
    std::vector<double> weights(class_weights.begin(), class_weights.end());
    const Var in[] = {logits};
    return t.push(Tensor::scalar(loss), in,
                  [logits, saved_rows = std::move(saved_rows), saved_labels = std::move(saved_labels),
                   weights = std::move(weights), logp = std::move(logp),
                   inv_n](Tape& tp, const Tensor&, const Tensor& g) {
                      Tensor* gz = tp.grad_slot(logits.id);
                      if (gz == nullptr) {
                          return;
                      }
                      for (std::size_t k = 0; k < saved_rows.size(); ++k) {
                          const std::size_t r = saved_rows[k];
                          const std::size_t y = saved_labels[r];
                          const double w = weights.empty() ? 1.0 : weights[y];
                          const double f = g[0] * w * inv_n;
                          for (std::size_t j = 0; j < logp.cols(); ++j) {
                              const double p = std::exp(logp(k, j));
                              (*gz)(r, j) += f * (p - (j == y ? 1.0 : 0.0));
                          }
                      }
                  });
}

Var kl_to_target(Var logits, const Tensor& target, std::span<const std::size_t> rows, double tau) {
    Tape& t = tape_of({logits});
    const Tensor& z = logits.value();
    if (tau <= 0.0) {
        throw Error("kl_to_target: temperature must be positive");
    }
    require_same_shape(z, target, "kl_to_target");
    if (rows.empty()) {
        throw ShapeError("kl_to_target: no rows selected");
    }
    check_rows(rows, z.rows(), "kl_to_target");
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    Tensor logq(rows.size(), z.cols());
    // same evaluation path as the target, so identical distributions cost exactly 0
    const Tensor q_all = softmax_with_temperature(z, tau);
    double loss = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t r = rows[k];
        auto lq = logq.row(k);
        for (std::size_t j = 0; j < z.cols(); ++j) {
            lq[j] = z(r, j) / tau;
        }
        row_log_softmax_inplace(lq);
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double p = target(r, j);
            if (p > 0.0 && p != q_all(r, j)) {
                loss += p * (std::log(p) - lq[j]);
            }
        }
    }
    loss *= inv_n;
    std::vector<std::size_t> saved_rows(rows.begin(), rows.end());
    const Var in[] = {logits};
    return t.push(Tensor::scalar(loss), in,
                  [logits, target, saved_rows = std::move(saved_rows), logq = std::move(logq), inv_n,
                   tau](Tape& tp, const Tensor&, const Tensor& g) {
                      Tensor* gz = tp.grad_slot(logits.id);
                      if (gz == nullptr) {
                          return;
                      }
                      for (std::size_t k = 0; k < saved_rows.size(); ++k) {
                          const std::size_t r = saved_rows[k];
                          double mass = 0.0;
                          for (std::size_t j = 0; j < logq.cols(); ++j) {
                              mass += target(r, j);
                          }
                          for (std::size_t j = 0; j < logq.cols(); ++j) {
                              const double q = std::exp(logq(k, j));
                              (*gz)(r, j) += g[0] * inv_n * (mass * q - target(r, j)) / tau;
                          }
                      }
                  });
}

Var overwrite_rows(Var x, std::span<const std::size_t> rows, const Tensor& values) {
    Tape& t = tape_of({x});
    const Tensor& xv = x.value();
    if (values.rows() != rows.size() || values.cols() != xv.cols()) {
        throw ShapeError("overwrite_rows: replacement shape mismatch");
    }
    check_rows(rows, xv.rows(), "overwrite_rows");
    Tensor out = xv;
    std::vector<std::uint8_t> replaced(xv.rows(), 0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        std::copy(values.row(k).begin(), values.row(k).end(), out.row(rows[k]).begin());
        replaced[rows[k]] = 1;
    }
    const Var in[] = {x};
    return t.push(std::move(out), in,
                  [x, replaced = std::move(replaced)](Tape& tp, const Tensor&, const Tensor& g) {
                      if (Tensor* gx = tp.grad_slot(x.id)) {
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                              if (replaced[i] != 0) {
                                  continue;
                              }
                              for (std::size_t j = 0; j < g.cols(); ++j) {
                                  (*gx)(i, j) += g(i, j);
                              }
                          }
                      }
                  });
}

Var nll_of_probabilities(Var probs, std::span<const std::size_t> rows,
                         std::span<const std::size_t> labels) {
    Tape& t = tape_of({probs});
    const Tensor& p = probs.value();
    constexpr double floor = 1e-12;
    if (rows.empty()) {
        throw ShapeError("nll_of_probabilities: no rows selected");
    }
    if (labels.size() != p.rows()) {
        throw ShapeError("nll_of_probabilities: label count does not match rows");
    }
    check_rows(rows, p.rows(), "nll_of_probabilities");
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    double loss = 0.0;
    for (std::size_t r : rows) {
        const double v = p(r, labels[r]);
        t.record_branch(v > floor);
        loss -= std::log(std::max(v, floor));
    }
    loss *= inv_n;
    std::vector<std::size_t> saved_rows(rows.begin(), rows.end());
    std::vector<std::size_t> saved_labels(labels.begin(), labels.end());
    const Var in[] = {probs};
    return t.push(Tensor::scalar(loss), in,
                  [probs, saved_rows = std::move(saved_rows), saved_labels = std::move(saved_labels),
                   inv_n](Tape& tp, const Tensor&, const Tensor& g) {
                      Tensor* gp = tp.grad_slot(probs.id);
                      if (gp == nullptr) {
                          return;
                      }
                      const Tensor& pv = tp.value(probs);
                      for (std::size_t r : saved_rows) {
                          const std::size_t y = saved_labels[r];
                          if (pv(r, y) > floor) {
                              (*gp)(r, y) -= g[0] * inv_n / pv(r, y);
                          }
                      }
                  });
}

// ---- value-level helpers --------------------------------------------------

Tensor softmax_with_temperature(const Tensor& logits, double tau) {
    if (!(tau > 0.0)) {
        throw Error("softmax_with_temperature: temperature must be positive");
    }
    Tensor out = logits;
    for (double& v : out.data()) {
        v /= tau;
    }
    for (std::size_t i = 0; i < out.rows(); ++i) {
        row_softmax_inplace(out.row(i));
    }
    return out;
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                     std::span<const double> class_weights) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("cross_entropy: label count does not match logit rows");
    }
    if (!class_weights.empty() && class_weights.size() != logits.cols()) {
        throw ShapeError("cross_entropy: class weight count does not match classes");
    }
    if (logits.rows() == 0) {
        throw ShapeError("cross_entropy: empty input");
    }
    std::vector<double> row(logits.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::copy(logits.row(i).begin(), logits.row(i).end(), row.begin());
        row_log_softmax_inplace(row);
        if (labels[i] >= logits.cols()) {
            throw ShapeError("cross_entropy: label out of range");
        }
        const double w = class_weights.empty() ? 1.0 : class_weights[labels[i]];
        loss -= w * row[labels[i]];
    }
    return loss / static_cast<double>(logits.rows());
}

double kl_divergence(const Tensor& p, const Tensor& q) {
    require_same_shape(p, q, "kl_divergence");
    if (p.rows() == 0) {
        throw ShapeError("kl_divergence: empty input");
    }
    constexpr double clamp = 1e-12;
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double pi = p(i, j);
            if (pi > 0.0 && pi != q(i, j)) {
                row += pi * (std::log(pi) - std::log(std::max(q(i, j), clamp)));
            }
        }
        total += row;
    }
    return total / static_cast<double>(p.rows());
}

} // namespace pgx::ad
