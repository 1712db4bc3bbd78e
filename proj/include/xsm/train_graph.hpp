#pragma once

#include <span>

#include "xsm/mesh.hpp"
#include "xsm/model.hpp"
#include "xsm/tape.hpp"

namespace xsm {

// Tape-graph builders for the training-mode forward. The inference engine
// (infer.hpp) mirrors these formulas exactly; parity between the two paths is
// covered by tests.

template <typename T>
class GraphBuilder {
public:
    using Tape = TapeT<T>;
    using Var = typename Tape::Var;

    GraphBuilder(Tape& tape, ModelT<T>& model) : tp_(tape), m_(model) {}

    // Linear map with optional LoRA delta when an adapter targets `name`.
    Var linear(Var x, ParameterT<T>& w, const std::string& name) {
        Var y = tp_.matmul(x, tp_.param(w));
        if (const LoraPairT<T>* l = m_.find_lora(name)) {
            auto* lp = const_cast<LoraPairT<T>*>(l);
            Var delta = tp_.matmul(tp_.matmul(x, tp_.param(lp->a)), tp_.param(lp->b));
            y = tp_.add(y, tp_.scale(delta, m_.lora_scaling()));
        }
        return y;
    }

    Var condition_memory(const PointCloud& pc) {
        XSM_CHECK(static_cast<int64_t>(pc.size()) == m_.cfg.cond_points, config_error,
                  "condition cloud must have " + std::to_string(m_.cfg.cond_points) + " points");
        TensorT<T> in = TensorT<T>::zeros({static_cast<int64_t>(pc.size()), 3});
        for (size_t i = 0; i < pc.size(); i++)
            for (int a = 0; a < 3; a++) in.data[i * 3 + a] = static_cast<T>(pc.points[i][a]);
        Var x = tp_.input(std::move(in));
        Var h = tp_.gelu(tp_.add(tp_.matmul(x, tp_.param(m_.cond.w1)), tp_.param(m_.cond.b1)));
        return tp_.add(tp_.matmul(h, tp_.param(m_.cond.w2)), tp_.param(m_.cond.b2));
    }

    struct BackboneOut {
        Var hidden;  // post-final-norm hidden rows, one per input position
        Var probs;   // next-token distributions, one per input position
    };

    // Full-sequence causal forward (training mode). tokens are input positions
    // 0..L-1; row s of probs is the distribution for position s+1.
    BackboneOut backbone(std::span<const int32_t> tokens, Var cond_mem) {
        const int64_t L = static_cast<int64_t>(tokens.size());
        XSM_CHECK(L >= 1 && L <= m_.cfg.max_seq, dim_error, "backbone: sequence length out of range");
        std::vector<int32_t> pos(L);
        for (int64_t i = 0; i < L; i++) pos[i] = static_cast<int32_t>(i);
        Var x = tp_.add(tp_.rows(tp_.param(m_.tok_emb), {tokens.begin(), tokens.end()}),
                        tp_.rows(tp_.param(m_.pos_emb), pos));
        Var mask = tp_.causal_mask(L);
        for (size_t bi = 0; bi < m_.blocks.size(); bi++) {
            auto& b = m_.blocks[bi];
            const std::string p = "block" + std::to_string(bi);
            Var a_in = tp_.layer_norm(x, tp_.param(b.ln1_g), tp_.param(b.ln1_b));
            x = tp_.add(x, mha(a_in, a_in, p + ".self", b.self_attn, mask));
            Var c_in = tp_.layer_norm(x, tp_.param(b.ln2_g), tp_.param(b.ln2_b));
            x = tp_.add(x, mha(c_in, cond_mem, p + ".cross", b.cross_attn, Var{}));
            Var f_in = tp_.layer_norm(x, tp_.param(b.ln3_g), tp_.param(b.ln3_b));
            Var f1 = tp_.gelu(tp_.add(linear(f_in, b.ffn_w1, p + ".ffn.w1"), tp_.param(b.ffn_b1)));
            x = tp_.add(x, tp_.add(linear(f1, b.ffn_w2, p + ".ffn.w2"), tp_.param(b.ffn_b2)));
        }
        BackboneOut out;
        out.hidden = tp_.layer_norm(x, tp_.param(m_.lnf_g), tp_.param(m_.lnf_b));
        out.probs = tp_.softmax_rows(tp_.add(linear(out.hidden, m_.w0, "w0.w"), tp_.param(m_.b0)));
        return out;
    }

    // Decoding head d (1-based) over hidden rows; returns one distribution per
    // row, interpreted at offset d+1 (head_target_position).
    Var head(int64_t d, Var hidden, Var cond_mem) {
        XSM_CHECK(d >= 1 && d <= static_cast<int64_t>(m_.heads.size()), config_error,
                  "head index out of range");
        auto& h = m_.heads[static_cast<size_t>(d - 1)];
        Var f;
        if (h.kind == HeadKind::cross_attention) {
            Var q = tp_.matmul(hidden, tp_.param(h.cross.wq));
            Var k = tp_.matmul(cond_mem, tp_.param(h.cross.wk));
            Var v = tp_.matmul(cond_mem, tp_.param(h.cross.wv));
            f = tp_.matmul(tp_.attention(q, k, v, false), tp_.param(h.cross.wo));
        } else {
            Var f1 = tp_.gelu(tp_.add(tp_.matmul(hidden, tp_.param(h.mlp_w1)), tp_.param(h.mlp_b1)));
            f = tp_.add(tp_.matmul(f1, tp_.param(h.mlp_w2)), tp_.param(h.mlp_b2));
        }
        Var z = tp_.layer_norm(tp_.add(hidden, f), tp_.param(h.ln_g), tp_.param(h.ln_b));
        return tp_.softmax_rows(tp_.add(tp_.matmul(z, tp_.param(h.wd)), tp_.param(h.bd)));
    }

private:
    Tape& tp_;
    ModelT<T>& m_;

    // Multihead attention: query rows from q_in, key/value rows from kv_in,
    // per-head column slices, optional additive mask (self-attention only).
    Var mha(Var q_in, Var kv_in, const std::string& prefix, AttnWeightsT<T>& w, Var mask) {
        const int64_t nh = m_.cfg.attn_heads;
        const int64_t dh = m_.cfg.head_dim();
        Var q = linear(q_in, w.wq, prefix + ".wq");
        Var k = linear(kv_in, w.wk, prefix + ".wk");
        Var v = linear(kv_in, w.wv, prefix + ".wv");
        std::vector<Var> outs;
        outs.reserve(static_cast<size_t>(nh));
        for (int64_t hd = 0; hd < nh; hd++) {
            Var qh = tp_.slice_cols(q, hd * dh, (hd + 1) * dh);
            Var kh = tp_.slice_cols(k, hd * dh, (hd + 1) * dh);
            Var vh = tp_.slice_cols(v, hd * dh, (hd + 1) * dh);
            Var scores = tp_.scale(tp_.matmul(qh, tp_.transpose(kh)), 1.0 / std::sqrt(double(dh)));
            if (mask.valid()) scores = tp_.add(scores, mask);
            outs.push_back(tp_.matmul(tp_.softmax_rows(scores), vh));
        }
        return linear(tp_.concat_cols(outs), w.wo, prefix + ".wo");
    }
};

}  // namespace xsm
