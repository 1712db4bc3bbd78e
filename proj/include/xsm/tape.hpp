#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xsm/tensor.hpp"

namespace xsm {

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

template <typename T>
struct ParameterT {
    TensorT<T> value;
    TensorT<T> grad;
    bool trainable = true;
    std::string name;

    explicit ParameterT(TensorT<T> v = {}, std::string n = "")
        : value(std::move(v)), grad(TensorT<T>::zeros(value.shape)), name(std::move(n)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

using Parameter = ParameterT<float>;

// Reverse-mode tape over dense matrices. One tape records one forward pass;
// backward() walks the nodes in reverse creation order. Tapes are independent
// objects, so data-parallel workers each own one and reduce afterwards.
template <typename T>
class TapeT {
public:
    struct Var {
        int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    bool check_finite = true;

    const TensorT<T>& value(Var v) const { return nodes_[v.id].value; }
    const TensorT<T>& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].rg; }
    size_t size() const { return nodes_.size(); }

    Var input(TensorT<T> t, bool requires_grad = false) {
        return push(std::move(t), requires_grad, nullptr, {});
    }

    // Leaf bound to a parameter; gradients land in the node and are added to
    // p.grad by accumulate_param_grads(). Frozen parameters enter as constants.
    Var param(ParameterT<T>& p) { return push(p.value, p.trainable, &p, {}); }

    Var matmul(Var a, Var b) {
        const auto& A = nodes_[a.id].value;
        const auto& B = nodes_[b.id].value;
        XSM_CHECK(A.cols() == B.rows(), dim_error,
                  "matmul: inner dimensions disagree " + shape_str(A.shape) + " x " + shape_str(B.shape));
        TensorT<T> out = TensorT<T>::zeros({A.rows(), B.cols()});
        emap(out).noalias() = emap(A) * emap(B);
        return push(std::move(out), any_rg({a, b}), nullptr, [a, b](TapeT& tp, int32_t self) {
            const auto& g = tp.nodes_[self].grad;
            if (tp.nodes_[a.id].rg)
                emap(tp.grad_ref(a.id)).noalias() += emap(g) * emap(tp.nodes_[b.id].value).transpose();
            if (tp.nodes_[b.id].rg)
                emap(tp.grad_ref(b.id)).noalias() +=
                    emap(tp.nodes_[a.id].value).transpose() * emap(g);
        });
    }

    Var transpose(Var a) {
        const auto& A = nodes_[a.id].value;
        TensorT<T> out = TensorT<T>::zeros({A.cols(), A.rows()});
        emap(out) = emap(A).transpose();
        return push(std::move(out), any_rg({a}), nullptr, [a](TapeT& tp, int32_t self) {
            if (tp.nodes_[a.id].rg)
                emap(tp.grad_ref(a.id)) += emap(tp.nodes_[self].grad).transpose();
        });
    }

    // b may share a's shape or be a row vector [1 x n] broadcast over rows.
    Var add(Var a, Var b) {
        const auto& A = nodes_[a.id].value;
        const auto& B = nodes_[b.id].value;
        const bool bcast = B.rows() == 1 && A.rows() != 1;
        XSM_CHECK(A.cols() == B.cols() && (bcast || A.rows() == B.rows()), dim_error,
                  "add: shape mismatch " + shape_str(A.shape) + " + " + shape_str(B.shape));
        TensorT<T> out = TensorT<T>::zeros(A.shape);
        if (bcast)
            emap(out) = emap(A).rowwise() + emap(B).row(0);
        else
            emap(out) = emap(A) + emap(B);
        return push(std::move(out), any_rg({a, b}), nullptr, [a, b, bcast](TapeT& tp, int32_t self) {
            const auto& g = tp.nodes_[self].grad;
            if (tp.nodes_[a.id].rg) emap(tp.grad_ref(a.id)) += emap(g);
            if (tp.nodes_[b.id].rg) {
                if (bcast)
                    emap(tp.grad_ref(b.id)).row(0) += emap(g).colwise().sum();
                else
                    emap(tp.grad_ref(b.id)) += emap(g);
            }
        });
    }

    Var scale(Var a, double s) {
        TensorT<T> out = nodes_[a.id].value;
        emap(out) *= T(s);
        return push(std::move(out), any_rg({a}), nullptr, [a, s](TapeT& tp, int32_t self) {
            if (tp.nodes_[a.id].rg) emap(tp.grad_ref(a.id)) += emap(tp.nodes_[self].grad) * T(s);
        });
    }

    // GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    Var gelu(Var a) {
        const auto& A = nodes_[a.id].value;
        TensorT<T> out = TensorT<T>::zeros(A.shape);
        auto x = emap(A).array();
        emap(out).array() = T(0.5) * x * (T(1) + (T(kGeluC) * (x + T(0.044715) * x.cube())).tanh());
        return push(std::move(out), any_rg({a}), nullptr, [a](TapeT& tp, int32_t self) {
            if (!tp.nodes_[a.id].rg) return;
            auto x = emap(tp.nodes_[a.id].value).array();
            auto g = emap(tp.nodes_[self].grad).array();
            auto t = (T(kGeluC) * (x + T(0.044715) * x.cube())).tanh();
            emap(tp.grad_ref(a.id)).array() +=
                g * (T(0.5) * (T(1) + t) +
                     T(0.5) * x * (T(1) - t.square()) * T(kGeluC) * (T(1) + T(3 * 0.044715) * x.square()));
        });
    }

    // Row-wise softmax, stabilized by row-max subtraction.
    Var softmax_rows(Var a) {
        const auto& A = nodes_[a.id].value;
        TensorT<T> out = TensorT<T>::zeros(A.shape);
        auto src = emap(A);
        auto dst = emap(out);
        for (int64_t r = 0; r < A.rows(); r++) {
            const T m = src.row(r).maxCoeff();
            dst.row(r) = (src.row(r).array() - m).exp();
            dst.row(r) /= dst.row(r).sum();
        }
        return push(std::move(out), any_rg({a}), nullptr, [a](TapeT& tp, int32_t self) {
            if (!tp.nodes_[a.id].rg) return;
            const auto& Y = tp.nodes_[self].value;
            const auto& g = tp.nodes_[self].grad;
            auto y = emap(Y);
            auto dy = emap(g);
            auto dx = emap(tp.grad_ref(a.id));
            for (int64_t r = 0; r < Y.rows(); r++) {
                const T dot = (dy.row(r).array() * y.row(r).array()).sum();
                dx.row(r).array() += y.row(r).array() * (dy.row(r).array() - dot);
            }
        });
    }

    // Per-row normalization with epsilon-guarded variance, then affine.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const auto& X = nodes_[x.id].value;
        const auto& G = nodes_[gain.id].value;
        const auto& B = nodes_[bias.id].value;
        XSM_CHECK(G.rows() == 1 && B.rows() == 1 && G.cols() == X.cols() && B.cols() == X.cols(),
                  dim_error, "layer_norm: gain/bias must be [1 x cols(x)]");
        const int64_t R = X.rows(), C = X.cols();
        TensorT<T> xhat = TensorT<T>::zeros(X.shape);
        TensorT<T> inv_std = TensorT<T>::zeros({R, 1});
        TensorT<T> out = TensorT<T>::zeros(X.shape);
        auto xm = emap(X);
        auto xh = emap(xhat);
        for (int64_t r = 0; r < R; r++) {
            const T mu = xm.row(r).mean();
            const T var = (xm.row(r).array() - mu).square().sum() / T(C);
            const T is = T(1) / std::sqrt(var + T(eps));
            inv_std.data[r] = is;
            xh.row(r) = (xm.row(r).array() - mu) * is;
        }
        auto om = emap(out);
        auto gv = emap(G);
        auto bv = emap(B);
        for (int64_t r = 0; r < R; r++)
            om.row(r).array() = xh.row(r).array() * gv.row(0).array() + bv.row(0).array();
        return push(std::move(out), any_rg({x, gain, bias}), nullptr,
                    [x, gain, bias, xhat, inv_std](TapeT& tp, int32_t self) {
                        const auto& g = tp.nodes_[self].grad;
                        auto dy = emap(g);
                        auto xh = emap(xhat);
                        const int64_t R = g.rows(), C = g.cols();
                        if (tp.nodes_[gain.id].rg)
                            emap(tp.grad_ref(gain.id)).row(0) +=
                                (dy.array() * xh.array()).colwise().sum().matrix();
                        if (tp.nodes_[bias.id].rg)
                            emap(tp.grad_ref(bias.id)).row(0) += dy.colwise().sum();
                        if (tp.nodes_[x.id].rg) {
                            auto G = emap(tp.nodes_[gain.id].value);
                            auto dx = emap(tp.grad_ref(x.id));
                            for (int64_t r = 0; r < R; r++) {
                                Eigen::Array<T, 1, Eigen::Dynamic> dxh =
                                    dy.row(r).array() * G.row(0).array();
                                const T m1 = dxh.mean();
                                const T m2 = (dxh * xh.row(r).array()).mean();
                                dx.row(r).array() +=
                                    inv_std.data[r] * (dxh - m1 - xh.row(r).array() * m2);
                            }
                            (void)C;
                        }
                    });
    }

    // Gather rows of a table by integer ids (embedding lookup).
    Var rows(Var table, std::vector<int32_t> ids) {
        const auto& Tb = nodes_[table.id].value;
        for (int32_t i : ids)
            XSM_CHECK(i >= 0 && i < Tb.rows(), dim_error, "rows: id out of range");
        TensorT<T> out = TensorT<T>::zeros({static_cast<int64_t>(ids.size()), Tb.cols()});
        auto src = emap(Tb);
        auto dst = emap(out);
        for (size_t r = 0; r < ids.size(); r++) dst.row(static_cast<int64_t>(r)) = src.row(ids[r]);
        return push(std::move(out), any_rg({table}), nullptr,
                    [table, ids = std::move(ids)](TapeT& tp, int32_t self) {
                        if (!tp.nodes_[table.id].rg) return;
                        auto g = emap(tp.nodes_[self].grad);
                        auto dt = emap(tp.grad_ref(table.id));
                        for (size_t r = 0; r < ids.size(); r++)
                            dt.row(ids[r]) += g.row(static_cast<int64_t>(r));
                    });
    }

    Var slice_rows(Var a, int64_t r0, int64_t r1) {
        const auto& A = nodes_[a.id].value;
        XSM_CHECK(0 <= r0 && r0 <= r1 && r1 <= A.rows(), dim_error, "slice_rows: bad range");
        TensorT<T> out = TensorT<T>::zeros({r1 - r0, A.cols()});
        emap(out) = emap(A).middleRows(r0, r1 - r0);
        return push(std::move(out), any_rg({a}), nullptr, [a, r0, r1](TapeT& tp, int32_t self) {
            if (tp.nodes_[a.id].rg)
                emap(tp.grad_ref(a.id)).middleRows(r0, r1 - r0) += emap(tp.nodes_[self].grad);
        });
    }

    Var slice_cols(Var a, int64_t c0, int64_t c1) {
        const auto& A = nodes_[a.id].value;
        XSM_CHECK(0 <= c0 && c0 <= c1 && c1 <= A.cols(), dim_error, "slice_cols: bad range");
        TensorT<T> out = TensorT<T>::zeros({A.rows(), c1 - c0});
        emap(out) = emap(A).middleCols(c0, c1 - c0);
        return push(std::move(out), any_rg({a}), nullptr, [a, c0, c1](TapeT& tp, int32_t self) {
            if (tp.nodes_[a.id].rg)
                emap(tp.grad_ref(a.id)).middleCols(c0, c1 - c0) += emap(tp.nodes_[self].grad);
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        XSM_CHECK(!parts.empty(), dim_error, "concat_cols: empty");
        int64_t R = nodes_[parts[0].id].value.rows(), C = 0;
        for (Var p : parts) {
            XSM_CHECK(nodes_[p.id].value.rows() == R, dim_error, "concat_cols: row mismatch");
            C += nodes_[p.id].value.cols();
        }
        TensorT<T> out = TensorT<T>::zeros({R, C});
        int64_t off = 0;
        for (Var p : parts) {
            const auto& P = nodes_[p.id].value;
            emap(out).middleCols(off, P.cols()) = emap(P);
            off += P.cols();
        }
        bool rg = false;
        for (Var p : parts) rg = rg || nodes_[p.id].rg;
        return push(std::move(out), rg, nullptr, [parts](TapeT& tp, int32_t self) {
            const auto& g = tp.nodes_[self].grad;
            int64_t off = 0;
            for (Var p : parts) {
                const int64_t c = tp.nodes_[p.id].value.cols();
                if (tp.nodes_[p.id].rg)
                    emap(tp.grad_ref(p.id)) += emap(g).middleCols(off, c);
                off += c;
            }
        });
    }

    // Sum over rows of -log p[label]; callers divide by the position count via
    // scale() to get a mean. Differentiable through the softmax that produced
    // the probability rows.
    Var cross_entropy_rows(Var probs, std::vector<int32_t> labels) {
        const auto& P = nodes_[probs.id].value;
        XSM_CHECK(static_cast<int64_t>(labels.size()) == P.rows(), dim_error,
                  "cross_entropy_rows: one label per row required");
        for (int32_t y : labels)
            XSM_CHECK(y >= 0 && y < P.cols(), dim_error, "cross_entropy_rows: label out of range");
        double s = 0.0;
        for (int64_t r = 0; r < P.rows(); r++)
            s -= std::log(std::max(static_cast<double>(P.at(r, labels[r])), 1e-30));
        TensorT<T> out({1, 1}, {T(s)});
        return push(std::move(out), any_rg({probs}), nullptr,
                    [probs, labels = std::move(labels)](TapeT& tp, int32_t self) {
                        if (!tp.nodes_[probs.id].rg) return;
                        const T up = tp.nodes_[self].grad.data[0];
                        const auto& P = tp.nodes_[probs.id].value;
                        auto& gp = tp.grad_ref(probs.id);
                        for (int64_t r = 0; r < P.rows(); r++) {
                            const T p = std::max(P.at(r, labels[r]), T(1e-30));
                            gp.at(r, labels[r]) -= up / p;
                        }
                    });
    }

    // -log probRow[label] for a single distribution row.
    Var cross_entropy(Var prob_row, int32_t label) {
        XSM_CHECK(nodes_[prob_row.id].value.rows() == 1, dim_error,
                  "cross_entropy: expected a single row");
        return cross_entropy_rows(prob_row, {label});
    }

    // softmax(q k^T / sqrt(d)) v. With causal=true, row i attends to key
    // positions <= i (square case) and q/k row counts must match.
    Var attention(Var q, Var k, Var v, bool causal) {
        const auto& Q = nodes_[q.id].value;
        const auto& K = nodes_[k.id].value;
        const auto& V = nodes_[v.id].value;
        XSM_CHECK(Q.cols() == K.cols(), dim_error, "attention: q/k head dim mismatch");
        XSM_CHECK(K.rows() == V.rows(), dim_error, "attention: k/v length mismatch");
        XSM_CHECK(!causal || Q.rows() == K.rows(), dim_error,
                  "attention: causal requires equal q/k lengths");
        Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(Q.cols())));
        if (causal) scores = add(scores, causal_mask(Q.rows()));
        return matmul(softmax_rows(scores), v);
    }

    Var causal_mask(int64_t n) {
        TensorT<T> m = TensorT<T>::zeros({n, n});
        for (int64_t i = 0; i < n; i++)
            for (int64_t j = i + 1; j < n; j++) m.at(i, j) = T(-1e30);
        return input(std::move(m));
    }

    // Reverse-mode sweep from a scalar loss. seed is the upstream gradient of
    // the loss (used for "sum / N" scaling without an extra node).
    void backward(Var loss, T seed = T(1)) {
        XSM_CHECK(loss.valid() && nodes_[loss.id].value.numel() == 1, state_error,
                  "backward: loss must be a recorded scalar");
        XSM_CHECK(nodes_[loss.id].rg, state_error,
                  "backward: loss does not depend on any trainable input");
        grad_ref(loss.id).data[0] += seed;
        for (int32_t i = loss.id; i >= 0; i--) {
            auto& n = nodes_[i];
            if (!n.rg || n.grad.data.empty() || !n.backward) continue;
            n.backward(*this, i);
            if (check_finite)
                XSM_CHECK(all_finite(n.grad), numeric_error, "backward: non-finite gradient");
        }
    }

    // Add leaf gradients into their Parameters. Kept separate from backward()
    // so data-parallel workers can reduce under external control.
    void accumulate_param_grads() {
        for (auto& n : nodes_) {
            if (n.param && n.rg && !n.grad.data.empty()) {
                XSM_CHECK(n.param->grad.same_shape(n.grad), dim_error,
                          "parameter grad shape mismatch");
                emap(n.param->grad) += emap(n.grad);
            }
        }
    }

    // Spec-shaped convenience: backward + accumulate into Parameter.grad.
    void backward_params(Var loss, T seed = T(1)) {
        backward(loss, seed);
        accumulate_param_grads();
    }

    TensorT<T>& grad_ref(int32_t id) {
        auto& n = nodes_[id];
        if (n.grad.data.empty()) n.grad = TensorT<T>::zeros(n.value.shape);
        return n.grad;
    }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;  // lazily allocated
        bool rg = false;
        ParameterT<T>* param = nullptr;
        std::function<void(TapeT&, int32_t)> backward;
    };

    std::vector<Node> nodes_;

    bool any_rg(std::initializer_list<Var> vs) const {
        for (Var v : vs)
            if (nodes_[v.id].rg) return true;
        return false;
    }

    Var push(TensorT<T> value, bool rg, ParameterT<T>* p,
             std::function<void(TapeT&, int32_t)> back) {
        if (check_finite)
            XSM_CHECK(all_finite(value), numeric_error, "forward: non-finite values");
        Node n;
        n.value = std::move(value);
        n.rg = rg;
        n.param = p;
        n.backward = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }
};

using Tape = TapeT<float>;
using TapeVar = Tape::Var;

}  // namespace xsm
