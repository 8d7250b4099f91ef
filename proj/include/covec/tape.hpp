#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "covec/tensor.hpp"

namespace covec {

enum class OpKind { add, mul, matmul, rotate_pairs, layernorm, softmax, gelu, mse };

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::rotate_pairs: return "rotate_pairs";
        case OpKind::layernorm: return "layernorm";
        case OpKind::softmax: return "softmax";
        case OpKind::gelu: return "gelu";
        case OpKind::mse: return "mse";
    }
    return "?";
}

namespace detail {

// C (m x n) = op(A) * op(B); op is an optional transpose. A is stored with
// `ar` rows before transposition, likewise B.
template <typename T>
void gemm(const std::vector<T>& a, std::size_t ar, std::size_t ac, bool ta,
          const std::vector<T>& b, std::size_t br, std::size_t bc, bool tb,
          std::vector<T>& out) {
    const std::size_t m = ta ? ac : ar;
    const std::size_t k = ta ? ar : ac;
    const std::size_t kb = tb ? bc : br;
    const std::size_t n = tb ? br : bc;
    if (k != kb) throw ShapeError("matmul: inner dimensions do not conform");
    out.assign(m * n, T(0));
    auto a_at = [&](std::size_t i, std::size_t l) { return ta ? a[l * ac + i] : a[i * ac + l]; };
    for (std::size_t i = 0; i < m; ++i) {
        T* out_row = out.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T aval = a_at(i, l);
            if (!tb) {
                const T* b_row = b.data() + l * bc;
                for (std::size_t j = 0; j < n; ++j) out_row[j] += aval * b_row[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) out_row[j] += aval * b[j * bc + l];
            }
        }
    }
}

template <typename T>
std::vector<T> transposed(const std::vector<T>& a, std::size_t r, std::size_t c) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return out;
}

}  // namespace detail

// Reverse-mode autodiff over a linear record of tensor ops. Records are
// appended in execution order, so replaying them backwards visits every
// node after all of its uses (topological by construction). One tape per
// training run, confined to a single thread.
template <typename T>
class Tape {
public:
    // Registers a trainable leaf; gradients accumulate into its node.
    Tensor<T> param(Tensor<T> t) {
        t.requires_grad = true;
        t.node = new_node(t.shape, true);
        return t;
    }

    std::size_t record_count() const { return records_.size(); }

    // ---- ops ------------------------------------------------------------

    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_pointwise(OpKind::add, a, b); }
    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_pointwise(OpKind::mul, a, b); }

    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false) {
        if (a.shape.size() != 2 || b.shape.size() != 2)
            throw ShapeError("matmul: operands must be 2-D, got " + a.shape_str() + " and " + b.shape_str());
        const std::size_t m = trans_a ? a.cols() : a.rows();
        const std::size_t n = trans_b ? b.rows() : b.cols();
        Tensor<T> out;
        out.shape = {m, n};
        detail::gemm(a.data, a.rows(), a.cols(), trans_a, b.data, b.rows(), b.cols(), trans_b, out.data);
        ensure_all_finite(out, "matmul");
        record(OpKind::matmul, {&a, &b}, out, [a, b, trans_a, trans_b](Tape& tape, const Record& rec, const std::vector<T>& g) {
            const std::size_t m2 = trans_a ? a.cols() : a.rows();
            const std::size_t n2 = trans_b ? b.rows() : b.cols();
            if (rec.inputs[0] >= 0) {
                // d(opA) = G * op(B)^T, then undo the transpose on A.
                std::vector<T> da;
                detail::gemm(g, m2, n2, false, b.data, b.rows(), b.cols(), !trans_b, da);
                if (trans_a) da = detail::transposed(da, m2, trans_a ? a.rows() : a.cols());
                tape.accumulate(rec.inputs[0], da);
            }
            if (rec.inputs[1] >= 0) {
                std::vector<T> db;
                detail::gemm(a.data, a.rows(), a.cols(), !trans_a, g, m2, n2, false, db);
                if (trans_b) db = detail::transposed(db, trans_b ? b.cols() : b.rows(), n2);
                tape.accumulate(rec.inputs[1], db);
            }
        });
        return out;
    }

    // Rotates consecutive column pairs (2i, 2i+1) of each row of `x` by the
    // matching angle in `angles` (one angle per pair per row).
    Tensor<T> rotate_pairs(const Tensor<T>& x, const Tensor<T>& angles) {
        if (x.shape.size() != 2 || x.cols() % 2 != 0)
            throw ShapeError("rotate_pairs: x must be 2-D with an even column count, got " + x.shape_str());
        if (angles.shape.size() != 2 || angles.rows() != x.rows() || angles.cols() != x.cols() / 2)
            throw ShapeError("rotate_pairs: angles must be " + std::to_string(x.rows()) + "x" +
                             std::to_string(x.cols() / 2) + ", got " + angles.shape_str());
        const std::size_t n = x.rows(), pairs = x.cols() / 2;
        Tensor<T> out = Tensor<T>::zeros(x.shape);
        std::vector<T> cs(n * pairs), sn(n * pairs);
        for (std::size_t i = 0; i < n * pairs; ++i) {
            cs[i] = std::cos(angles.data[i]);
            sn[i] = std::sin(angles.data[i]);
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t p = 0; p < pairs; ++p) {
                const T c = cs[r * pairs + p], s = sn[r * pairs + p];
                const T x0 = x.data[r * x.cols() + 2 * p], x1 = x.data[r * x.cols() + 2 * p + 1];
                out.data[r * x.cols() + 2 * p] = x0 * c - x1 * s;
                out.data[r * x.cols() + 2 * p + 1] = x0 * s + x1 * c;
            }
        ensure_all_finite(out, "rotate_pairs");
        record(OpKind::rotate_pairs, {&x, &angles}, out,
               [x, cs, sn, n, pairs](Tape& tape, const Record& rec, const std::vector<T>& g) {
                   const std::size_t d = pairs * 2;
                   if (rec.inputs[0] >= 0) {
                       std::vector<T> dx(n * d);
                       for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t p = 0; p < pairs; ++p) {
                               const T c = cs[r * pairs + p], s = sn[r * pairs + p];
                               const T g0 = g[r * d + 2 * p], g1 = g[r * d + 2 * p + 1];
                               dx[r * d + 2 * p] = g0 * c + g1 * s;
                               dx[r * d + 2 * p + 1] = -g0 * s + g1 * c;
                           }
                       tape.accumulate(rec.inputs[0], dx);
                   }
                   if (rec.inputs[1] >= 0) {
                       std::vector<T> da(n * pairs);
                       for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t p = 0; p < pairs; ++p) {
                               const T c = cs[r * pairs + p], s = sn[r * pairs + p];
                               const T x0 = x.data[r * d + 2 * p], x1 = x.data[r * d + 2 * p + 1];
                               const T g0 = g[r * d + 2 * p], g1 = g[r * d + 2 * p + 1];
                               da[r * pairs + p] = g0 * (-x0 * s - x1 * c) + g1 * (x0 * c - x1 * s);
                           }
                       tape.accumulate(rec.inputs[1], da);
                   }
               });
        return out;
    }

    // Row-wise layer normalization with per-column gain and bias (1 x d).
    Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
        if (x.shape.size() != 2) throw ShapeError("layernorm: x must be 2-D, got " + x.shape_str());
        const std::size_t n = x.rows(), d = x.cols();
        auto check_vec = [&](const Tensor<T>& v, const char* what) {
            if (!(v.shape.size() == 2 && v.rows() == 1 && v.cols() == d))
                throw ShapeError(std::string("layernorm: ") + what + " must be 1x" + std::to_string(d) +
                                 ", got " + v.shape_str());
        };
        check_vec(gain, "gain");
        check_vec(bias, "bias");
        const T eps = T(1e-5);
        Tensor<T> out = Tensor<T>::zeros(x.shape);
        std::vector<T> xhat(n * d), inv_std(n);
        for (std::size_t r = 0; r < n; ++r) {
            const T* row = x.data.data() + r * d;
            T mean = 0;
            for (std::size_t j = 0; j < d; ++j) mean += row[j];
            mean /= T(d);
            T var = 0;
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= T(d);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[r] = is;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[r * d + j] = (row[j] - mean) * is;
                out.data[r * d + j] = xhat[r * d + j] * gain.data[j] + bias.data[j];
            }
        }
        ensure_all_finite(out, "layernorm");
        record(OpKind::layernorm, {&x, &gain, &bias}, out,
               [gain, xhat, inv_std, n, d](Tape& tape, const Record& rec, const std::vector<T>& g) {
                   if (rec.inputs[0] >= 0) {
                       std::vector<T> dx(n * d);
                       for (std::size_t r = 0; r < n; ++r) {
                           T sum_dh = 0, sum_dh_xhat = 0;
                           for (std::size_t j = 0; j < d; ++j) {
                               const T dh = g[r * d + j] * gain.data[j];
                               sum_dh += dh;
                               sum_dh_xhat += dh * xhat[r * d + j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                               const T dh = g[r * d + j] * gain.data[j];
                               dx[r * d + j] =
                                   inv_std[r] * (dh - sum_dh / T(d) - xhat[r * d + j] * sum_dh_xhat / T(d));
                           }
                       }
                       tape.accumulate(rec.inputs[0], dx);
                   }
                   if (rec.inputs[1] >= 0) {
                       std::vector<T> dg(d, T(0));
                       for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < d; ++j) dg[j] += g[r * d + j] * xhat[r * d + j];
                       tape.accumulate(rec.inputs[1], dg);
                   }
                   if (rec.inputs[2] >= 0) {
                       std::vector<T> db(d, T(0));
                       for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < d; ++j) db[j] += g[r * d + j];
                       tape.accumulate(rec.inputs[2], db);
                   }
               });
        return out;
    }

    // Row-wise softmax.
    Tensor<T> softmax(const Tensor<T>& x) {
        if (x.shape.size() != 2) throw ShapeError("softmax: x must be 2-D, got " + x.shape_str());
        const std::size_t n = x.rows(), d = x.cols();
        Tensor<T> out = Tensor<T>::zeros(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const T* row = x.data.data() + r * d;
            T mx = row[0];
            for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            T sum = 0;
            for (std::size_t j = 0; j < d; ++j) {
                const T e = std::exp(row[j] - mx);
                out.data[r * d + j] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] /= sum;
        }
        ensure_all_finite(out, "softmax");
        const std::vector<T> y = out.data;
        record(OpKind::softmax, {&x}, out, [y, n, d](Tape& tape, const Record& rec, const std::vector<T>& g) {
            if (rec.inputs[0] < 0) return;
            std::vector<T> dx(n * d);
            for (std::size_t r = 0; r < n; ++r) {
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                for (std::size_t j = 0; j < d; ++j) dx[r * d + j] = y[r * d + j] * (g[r * d + j] - dot);
            }
            tape.accumulate(rec.inputs[0], dx);
        });
        return out;
    }

    // Exact (erf-based) GELU.
    Tensor<T> gelu(const Tensor<T>& x) {
        Tensor<T> out = Tensor<T>::zeros(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const T v = x.data[i];
            out.data[i] = T(0.5) * v * (T(1) + std::erf(v * T(0.7071067811865475244)));
        }
        ensure_all_finite(out, "gelu");
        record(OpKind::gelu, {&x}, out, [x](Tape& tape, const Record& rec, const std::vector<T>& g) {
            if (rec.inputs[0] < 0) return;
            std::vector<T> dx(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const T v = x.data[i];
                const T cdf = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475244)));
                const T pdf = std::exp(T(-0.5) * v * v) * T(0.3989422804014326779);
                dx[i] = g[i] * (cdf + v * pdf);
            }
            tape.accumulate(rec.inputs[0], dx);
        });
        return out;
    }

    // Mean over all elements of the squared difference; scalar output.
    Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
        if (!a.same_shape(b))
            throw ShapeError("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        T acc = 0;
        for (std::size_t i = 0; i < a.numel(); ++i) {
            const T diff = a.data[i] - b.data[i];
            acc += diff * diff;
        }
        Tensor<T> out = Tensor<T>::scalar(acc / T(a.numel()));
        ensure_all_finite(out, "mse");
        record(OpKind::mse, {&a, &b}, out, [a, b](Tape& tape, const Record& rec, const std::vector<T>& g) {
            const T scale = g[0] * T(2) / T(a.numel());
            if (rec.inputs[0] >= 0) {
                std::vector<T> da(a.numel());
                for (std::size_t i = 0; i < a.numel(); ++i) da[i] = scale * (a.data[i] - b.data[i]);
                tape.accumulate(rec.inputs[0], da);
            }
            if (rec.inputs[1] >= 0) {
                std::vector<T> db(a.numel());
                for (std::size_t i = 0; i < a.numel(); ++i) db[i] = scale * (b.data[i] - a.data[i]);
                tape.accumulate(rec.inputs[1], db);
            }
        });
        return out;
    }

    // Generic entry point: dispatches on the op kind with arity checking.
    Tensor<T> forward_op(OpKind kind, std::span<const Tensor<T>> inputs) {
        auto need = [&](std::size_t n) {
            if (inputs.size() != n)
                throw ShapeError(std::string("forward_op(") + op_name(kind) + "): expected " +
                                 std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
        };
        switch (kind) {
            case OpKind::add: need(2); return add(inputs[0], inputs[1]);
            case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
            case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
            case OpKind::rotate_pairs: need(2); return rotate_pairs(inputs[0], inputs[1]);
            case OpKind::layernorm: need(3); return layernorm(inputs[0], inputs[1], inputs[2]);
            case OpKind::softmax: need(1); return softmax(inputs[0]);
            case OpKind::gelu: need(1); return gelu(inputs[0]);
            case OpKind::mse: need(2); return mse(inputs[0], inputs[1]);
        }
        throw ConfigError("forward_op: unknown op kind");
    }

    // ---- gradients -------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and replays the records in reverse. Grads
    // are reset first, so repeated calls yield identical results.
    void backward(const Tensor<T>& loss) {
        if (!loss.is_scalar())
            throw ShapeError("backward: loss must be scalar, got " + loss.shape_str());
        if (loss.node < 0) throw Error("backward: loss is not attached to this tape");
        if (records_.empty()) throw Error("backward: tape is empty");
        for (auto& node : nodes_) std::fill(node.grad.begin(), node.grad.end(), T(0));
        nodes_[static_cast<std::size_t>(loss.node)].grad[0] = T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            const std::vector<T>& g = nodes_[static_cast<std::size_t>(it->output)].grad;
            it->pull(*this, *it, g);
        }
    }

    // Gradient of the last backward() pass with respect to a registered tensor.
    Tensor<T> grad(const Tensor<T>& t) const {
        if (t.node < 0) throw Error("grad: tensor is detached from the tape");
        const Node& node = nodes_[static_cast<std::size_t>(t.node)];
        Tensor<T> g;
        g.shape = node.shape;
        g.data = node.grad;
        return g;
    }

private:
    struct Node {
        std::vector<std::size_t> shape;
        bool is_param;
        std::vector<T> grad;
    };

    struct Record {
        OpKind kind;
        std::vector<int> inputs;
        int output;
        std::function<void(Tape&, const Record&, const std::vector<T>&)> pull;
    };

    int new_node(const std::vector<std::size_t>& shape, bool is_param) {
        std::size_t numel = 1;
        for (auto e : shape) numel *= e;
        nodes_.push_back(Node{shape, is_param, std::vector<T>(numel, T(0))});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void accumulate(int node, const std::vector<T>& g) {
        std::vector<T>& dst = nodes_[static_cast<std::size_t>(node)].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }

    template <typename Pull>
    void record(OpKind kind, std::initializer_list<const Tensor<T>*> inputs, Tensor<T>& out, Pull&& pull) {
        bool tracked = false;
        std::vector<int> ids;
        ids.reserve(inputs.size());
        for (const Tensor<T>* in : inputs) {
            ids.push_back(in->node);
            tracked = tracked || in->node >= 0;
        }
        if (!tracked) return;
        out.node = new_node(out.shape, false);
        out.requires_grad = true;
        records_.push_back(Record{kind, std::move(ids), out.node,
                                  std::function<void(Tape&, const Record&, const std::vector<T>&)>(
                                      std::forward<Pull>(pull))});
    }

    // add / mul share shape handling: equal shapes elementwise, or one
    // scalar operand (the only broadcast allowed).
    Tensor<T> binary_pointwise(OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
        const bool a_scalar = a.is_scalar(), b_scalar = b.is_scalar();
        if (!a.same_shape(b) && !a_scalar && !b_scalar)
            throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str() + " (only scalar-with-tensor is broadcast)");
        const Tensor<T>& big = (a_scalar && !b_scalar) ? b : a;
        Tensor<T> out = Tensor<T>::zeros(big.shape);
        const std::size_t n = out.numel();
        for (std::size_t i = 0; i < n; ++i) {
            const T av = a_scalar ? a.data[0] : a.data[i];
            const T bv = b_scalar ? b.data[0] : b.data[i];
            out.data[i] = (kind == OpKind::add) ? av + bv : av * bv;
        }
        ensure_all_finite(out, op_name(kind));
        record(kind, {&a, &b}, out, [kind, a, b, a_scalar, b_scalar](Tape& tape, const Record& rec,
                                                                     const std::vector<T>& g) {
            auto pull_side = [&](int idx, const Tensor<T>& self, const Tensor<T>& other, bool self_scalar,
                                 bool other_scalar) {
                if (rec.inputs[idx] < 0) return;
                std::vector<T> d(self.numel(), T(0));
                for (std::size_t i = 0; i < g.size(); ++i) {
                    T contrib = g[i];
                    if (kind == OpKind::mul) contrib *= other_scalar ? other.data[0] : other.data[i];
                    d[self_scalar ? 0 : i] += contrib;
                }
                tape.accumulate(rec.inputs[idx], d);
            };
            pull_side(0, a, b, a_scalar, b_scalar);
            pull_side(1, b, a, b_scalar, a_scalar);
        });
        return out;
    }

    std::vector<Node> nodes_;
    std::vector<Record> records_;
};

// Central-difference gradient verification. `build_loss` must be a
// deterministic functor (Tape<T>&, const Tensor<T>& leaf) -> scalar Tensor.
// Returns max over coordinates of |g_ad - g_fd| / max(1, |g_ad|).
template <typename T, typename BuildLoss>
T finite_diff_check(BuildLoss&& build_loss, const Tensor<T>& w, T eps) {
    if (!(eps > T(0)) || eps > T(1e-2)) throw ConfigError("finite_diff_check: eps must be in (0, 1e-2]");
    Tape<T> tape;
    Tensor<T> leaf = tape.param(w);
    Tensor<T> loss = build_loss(tape, leaf);
    if (!loss.is_scalar()) throw ShapeError("finite_diff_check: loss must be scalar");
    tape.backward(loss);
    const Tensor<T> g = tape.grad(leaf);

    auto eval = [&](const Tensor<T>& point) {
        Tape<T> local;
        Tensor<T> l = build_loss(local, local.param(point));
        if (!is_finite_value(l.data[0])) throw NumericError("finite_diff_check: non-finite loss");
        return l.data[0];
    };

    T max_err = 0;
    for (std::size_t i = 0; i < w.numel(); ++i) {
        Tensor<T> plus = w, minus = w;
        plus.data[i] += eps;
        minus.data[i] -= eps;
        const T fd = (eval(plus) - eval(minus)) / (T(2) * eps);
        const T err = std::abs(g.data[i] - fd) / std::max(T(1), std::abs(g.data[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace covec
