#include "xsm/infer.hpp"

#include <cmath>

#include "xsm/errors.hpp"

namespace xsm {

namespace {

using Mat = EMat<float>;

void layer_norm_rows(Mat& x, const Tensor& g, const Tensor& b, double eps = 1e-5) {
    const auto gv = emap(g).row(0).array();
    const auto bv = emap(b).row(0).array();
    for (int64_t r = 0; r < x.rows(); r++) {
        const float mu = x.row(r).mean();
        const float var = (x.row(r).array() - mu).square().sum() / float(x.cols());
        const float is = 1.0f / std::sqrt(var + float(eps));
        x.row(r).array() = ((x.row(r).array() - mu) * is) * gv + bv;
    }
}

void gelu_inplace(Mat& x) {
    auto a = x.array();
    x.array() = 0.5f * a * (1.0f + (float(kGeluC) * (a + 0.044715f * a.cube())).tanh());
}

void softmax_rows_inplace(Mat& x) {
    for (int64_t r = 0; r < x.rows(); r++) {
        const float m = x.row(r).maxCoeff();
        x.row(r).array() = (x.row(r).array() - m).exp();
        x.row(r) /= x.row(r).sum();
    }
}

}  // namespace

KVCache::KVCache(int64_t blocks, int64_t max_seq, int64_t d_model) : max_seq_(max_seq) {
    for (int64_t i = 0; i < blocks; i++) {
        k_.push_back(Tensor::zeros({max_seq, d_model}));
        v_.push_back(Tensor::zeros({max_seq, d_model}));
    }
}

void KVCache::rollback(int64_t to_len) {
    XSM_CHECK(to_len >= 0 && to_len <= len_, state_error,
              "rollback: target length " + std::to_string(to_len) + " exceeds cache length " +
                  std::to_string(len_));
    len_ = to_len;
}

KVCache InferenceEngine::make_cache() const {
    return KVCache(m_.cfg.blocks, m_.cfg.max_seq, m_.cfg.d_model);
}

namespace {

// y = x W (+ LoRA delta when an adapter targets `name`)
Mat apply_linear(const Model& m, const Mat& x, const Parameter& w, const std::string& name) {
    Mat y;
    y.noalias() = x * emap(w.value);
    if (const LoraPairT<float>* l = m.find_lora(name)) {
        const float s = static_cast<float>(m.lora_scaling());
        y.noalias() += s * ((x * emap(l->a.value)) * emap(l->b.value));
    }
    return y;
}

}  // namespace

CondMemory InferenceEngine::encode_condition(const PointCloud& pc) const {
    XSM_CHECK(static_cast<int64_t>(pc.size()) == m_.cfg.cond_points, config_error,
              "condition cloud must have " + std::to_string(m_.cfg.cond_points) + " points");
    Mat x(pc.size(), 3);
    for (size_t i = 0; i < pc.size(); i++)
        for (int a = 0; a < 3; a++) x(static_cast<int64_t>(i), a) = pc.points[i][a];
    Mat h;
    h.noalias() = x * emap(m_.cond.w1.value);
    h.rowwise() += emap(m_.cond.b1.value).row(0);
    gelu_inplace(h);
    Mat mem;
    mem.noalias() = h * emap(m_.cond.w2.value);
    mem.rowwise() += emap(m_.cond.b2.value).row(0);

    CondMemory out;
    out.memory = Tensor::zeros({mem.rows(), mem.cols()});
    emap(out.memory) = mem;
    for (size_t bi = 0; bi < m_.blocks.size(); bi++) {
        const std::string p = "block" + std::to_string(bi);
        Mat k = apply_linear(m_, mem, m_.blocks[bi].cross_attn.wk, p + ".cross.wk");
        Mat v = apply_linear(m_, mem, m_.blocks[bi].cross_attn.wv, p + ".cross.wv");
        out.block_k.push_back(Tensor::zeros({k.rows(), k.cols()}));
        out.block_v.push_back(Tensor::zeros({v.rows(), v.cols()}));
        emap(out.block_k.back()) = k;
        emap(out.block_v.back()) = v;
    }
    for (const auto& hd : m_.heads) {
        if (hd.kind == HeadKind::cross_attention) {
            Mat k, v;
            k.noalias() = mem * emap(hd.cross.wk.value);
            v.noalias() = mem * emap(hd.cross.wv.value);
            out.head_k.push_back(Tensor::zeros({k.rows(), k.cols()}));
            out.head_v.push_back(Tensor::zeros({v.rows(), v.cols()}));
            emap(out.head_k.back()) = k;
            emap(out.head_v.back()) = v;
        } else {
            out.head_k.emplace_back();
            out.head_v.emplace_back();
        }
    }
    return out;
}

ForwardResult InferenceEngine::forward_window(std::span<const int32_t> tokens, KVCache& cache,
                                              const CondMemory& cond) const {
    const int64_t w = static_cast<int64_t>(tokens.size());
    const int64_t s0 = cache.len();
    XSM_CHECK(w >= 1, dim_error, "forward_window: empty window");
    XSM_CHECK(s0 + w <= m_.cfg.max_seq, state_error,
              "forward_window: sequence would exceed max_seq");
    XSM_CHECK(static_cast<int64_t>(cache.k_.size()) == m_.cfg.blocks, state_error,
              "forward_window: cache/block count mismatch");
    const int64_t d = m_.cfg.d_model;
    const int64_t nh = m_.cfg.attn_heads;
    const int64_t dh = m_.cfg.head_dim();

    Mat x(w, d);
    for (int64_t i = 0; i < w; i++) {
        const int32_t t = tokens[static_cast<size_t>(i)];
        XSM_CHECK(t >= 0 && t < m_.cfg.vocab, dim_error, "forward_window: token out of range");
        x.row(i) = emap(m_.tok_emb.value).row(t) + emap(m_.pos_emb.value).row(s0 + i);
    }

    for (size_t bi = 0; bi < m_.blocks.size(); bi++) {
        const auto& b = m_.blocks[bi];
        const std::string p = "block" + std::to_string(bi);

        // self-attention over cache + window (causal within the window)
        Mat a = x;
        layer_norm_rows(a, b.ln1_g.value, b.ln1_b.value);
        Mat q = apply_linear(m_, a, b.self_attn.wq, p + ".self.wq");
        Mat kw = apply_linear(m_, a, b.self_attn.wk, p + ".self.wk");
        Mat vw = apply_linear(m_, a, b.self_attn.wv, p + ".self.wv");
        emap(cache.k_[bi]).middleRows(s0, w) = kw;
        emap(cache.v_[bi]).middleRows(s0, w) = vw;
        const auto K = emap(cache.k_[bi]).topRows(s0 + w);
        const auto V = emap(cache.v_[bi]).topRows(s0 + w);
        Mat ctx(w, d);
        for (int64_t hd = 0; hd < nh; hd++) {
            Mat scores(w, s0 + w);
            scores.noalias() =
                q.middleCols(hd * dh, dh) * K.middleCols(hd * dh, dh).transpose();
            scores *= 1.0f / std::sqrt(float(dh));
            for (int64_t i = 0; i < w; i++)
                for (int64_t j = s0 + i + 1; j < s0 + w; j++) scores(i, j) = -1e30f;
            softmax_rows_inplace(scores);
            ctx.middleCols(hd * dh, dh).noalias() = scores * V.middleCols(hd * dh, dh);
        }
        x.noalias() += apply_linear(m_, ctx, b.self_attn.wo, p + ".self.wo");

        // cross-attention over the condition memory
        Mat c = x;
        layer_norm_rows(c, b.ln2_g.value, b.ln2_b.value);
        Mat qc = apply_linear(m_, c, b.cross_attn.wq, p + ".cross.wq");
        const auto CK = emap(cond.block_k[bi]);
        const auto CV = emap(cond.block_v[bi]);
        Mat cctx(w, d);
        for (int64_t hd = 0; hd < nh; hd++) {
            Mat scores(w, CK.rows());
            scores.noalias() =
                qc.middleCols(hd * dh, dh) * CK.middleCols(hd * dh, dh).transpose();
            scores *= 1.0f / std::sqrt(float(dh));
            softmax_rows_inplace(scores);
            cctx.middleCols(hd * dh, dh).noalias() = scores * CV.middleCols(hd * dh, dh);
        }
        x.noalias() += apply_linear(m_, cctx, b.cross_attn.wo, p + ".cross.wo");

        // feed-forward
        Mat f = x;
        layer_norm_rows(f, b.ln3_g.value, b.ln3_b.value);
        Mat f1 = apply_linear(m_, f, b.ffn_w1, p + ".ffn.w1");
        f1.rowwise() += emap(b.ffn_b1.value).row(0);
        gelu_inplace(f1);
        Mat f2 = apply_linear(m_, f1, b.ffn_w2, p + ".ffn.w2");
        f2.rowwise() += emap(b.ffn_b2.value).row(0);
        x.noalias() += f2;
    }
    cache.len_ = s0 + w;

    Mat h = x;
    layer_norm_rows(h, m_.lnf_g.value, m_.lnf_b.value);
    Mat logits = apply_linear(m_, h, m_.w0, "w0.w");
    logits.rowwise() += emap(m_.b0.value).row(0);
    softmax_rows_inplace(logits);

    ForwardResult out;
    out.probs = Tensor::zeros({w, m_.cfg.vocab});
    out.hidden = Tensor::zeros({w, d});
    emap(out.probs) = logits;
    emap(out.hidden) = h;
    XSM_CHECK(all_finite(out.probs), numeric_error, "forward_window: non-finite distribution");
    return out;
}

Tensor InferenceEngine::head_forward(const Tensor& hidden, int64_t row, const CondMemory& cond,
                                     int64_t d) const {
    XSM_CHECK(d >= 1 && d <= static_cast<int64_t>(m_.heads.size()), config_error,
              "head_forward: head index out of range");
    XSM_CHECK(row >= 0 && row < hidden.rows(), dim_error, "head_forward: row out of range");
    const auto& hd = m_.heads[static_cast<size_t>(d - 1)];
    Mat h = emap(hidden).row(row);
    Mat f;
    if (hd.kind == HeadKind::cross_attention) {
        Mat q;
        q.noalias() = h * emap(hd.cross.wq.value);
        const auto K = emap(cond.head_k[static_cast<size_t>(d - 1)]);
        const auto V = emap(cond.head_v[static_cast<size_t>(d - 1)]);
        Mat scores;
        scores.noalias() = q * K.transpose();
        scores *= 1.0f / std::sqrt(float(m_.cfg.d_model));
        softmax_rows_inplace(scores);
        Mat ctx;
        ctx.noalias() = scores * V;
        f.noalias() = ctx * emap(hd.cross.wo.value);
    } else {
        Mat f1;
        f1.noalias() = h * emap(hd.mlp_w1.value);
        f1.rowwise() += emap(hd.mlp_b1.value).row(0);
        gelu_inplace(f1);
        f.noalias() = f1 * emap(hd.mlp_w2.value);
        f.rowwise() += emap(hd.mlp_b2.value).row(0);
    }
    Mat z = h + f;
    layer_norm_rows(z, hd.ln_g.value, hd.ln_b.value);
    Mat logits;
    logits.noalias() = z * emap(hd.wd.value);
    logits.rowwise() += emap(hd.bd.value).row(0);
    softmax_rows_inplace(logits);
    Tensor out = Tensor::zeros({1, m_.cfg.vocab});
    emap(out) = logits;
    return out;
}

}  // namespace xsm
