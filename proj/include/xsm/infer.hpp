#pragma once

#include <span>
#include <vector>

#include "xsm/mesh.hpp"
#include "xsm/model.hpp"

namespace xsm {

// Condition memory plus the per-block / per-head cross-attention keys and
// values, which depend only on the condition and are computed once per stream.
struct CondMemory {
    Tensor memory;                 // [C x d]
    std::vector<Tensor> block_k;   // per block [C x d]
    std::vector<Tensor> block_v;
    std::vector<Tensor> head_k;    // per decode head [C x d]
    std::vector<Tensor> head_v;
};

// Per-block key/value rows for the accepted prefix. Rolling back truncates the
// logical length; subsequent forwards reproduce a fresh cache exactly.
class KVCache {
public:
    KVCache(int64_t blocks, int64_t max_seq, int64_t d_model);

    int64_t len() const { return len_; }
    int64_t capacity() const { return max_seq_; }
    void rollback(int64_t to_len);

    Tensor& k(size_t block) { return k_[block]; }
    Tensor& v(size_t block) { return v_[block]; }
    const Tensor& k(size_t block) const { return k_[block]; }
    const Tensor& v(size_t block) const { return v_[block]; }

private:
    friend class InferenceEngine;
    int64_t len_ = 0;
    int64_t max_seq_ = 0;
    std::vector<Tensor> k_, v_;
};

struct ForwardResult {
    Tensor probs;   // [w x V] next-token distributions for positions len+1..len+w
    Tensor hidden;  // [w x d] post-final-norm hidden rows
};

// Tape-free forward path for decoding. Shares weights with the training model
// (no copies) and honors attached LoRA adapters; formulas mirror GraphBuilder.
class InferenceEngine {
public:
    explicit InferenceEngine(const Model& m) : m_(m) {}

    const Model& model() const { return m_; }

    KVCache make_cache() const;
    CondMemory encode_condition(const PointCloud& pc) const;

    // Forward the window, extending the cache by tokens.size(). The cache
    // length must equal the number of already-forwarded prefix tokens.
    ForwardResult forward_window(std::span<const int32_t> tokens, KVCache& cache,
                                 const CondMemory& cond) const;

    // Distribution of decoding head d (1-based) read from one hidden row.
    Tensor head_forward(const Tensor& hidden, int64_t row, const CondMemory& cond,
                        int64_t d) const;

private:
    const Model& m_;
};

}  // namespace xsm
