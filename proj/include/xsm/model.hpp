#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xsm/rng.hpp"
#include "xsm/tape.hpp"

namespace xsm {

enum class HeadKind { cross_attention, mlp };

HeadKind head_kind_from_string(const std::string& s);
std::string head_kind_name(HeadKind k);

struct BackboneConfig {
    int64_t blocks = 4;        // N
    int64_t d_model = 128;
    int64_t attn_heads = 4;
    int64_t ffn_width = 512;
    int64_t vocab = 131;       // V = bins + 3
    int64_t max_seq = 1856;    // L_max
    int64_t cond_points = 256;
    int64_t decode_heads = 4;  // D
    HeadKind head_kind = HeadKind::cross_attention;
    int64_t lora_rank = 16;
    double lora_alpha = 32.0;

    int64_t head_dim() const { return d_model / attn_heads; }
    void validate() const;
};

// Shared by training targets and decode usage: head d consumes the hidden row
// at position s and predicts the token at s + d + 1 (d = 0 is the backbone
// next-token path).
inline int64_t head_target_position(int64_t s, int64_t d) { return s + d + 1; }

template <typename T>
struct AttnWeightsT {
    ParameterT<T> wq, wk, wv, wo;  // each [d x d], y = x * W
};

template <typename T>
struct BlockT {
    ParameterT<T> ln1_g, ln1_b;
    AttnWeightsT<T> self_attn;
    ParameterT<T> ln2_g, ln2_b;
    AttnWeightsT<T> cross_attn;
    ParameterT<T> ln3_g, ln3_b;
    ParameterT<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
struct DecodingHeadT {
    HeadKind kind = HeadKind::cross_attention;
    // cross_attention kind
    AttnWeightsT<T> cross;
    // mlp kind (hidden width 4 * d_model)
    ParameterT<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    // shared tail: z = LN(h + f(h[, c])), logits = z * wd + bd
    ParameterT<T> ln_g, ln_b;
    ParameterT<T> wd, bd;
};

template <typename T>
struct CondEncoderT {
    ParameterT<T> w1, b1, w2, b2;  // 3 -> d_model -> d_model, GELU between
};

// One low-rank pair adapting a named weight matrix: delta = (alpha/r) x A B.
template <typename T>
struct LoraPairT {
    std::string target;
    ParameterT<T> a;  // [in x r]
    ParameterT<T> b;  // [r x out]
};

template <typename T>
struct ModelT {
    BackboneConfig cfg;
    ParameterT<T> tok_emb;  // [V x d]
    ParameterT<T> pos_emb;  // [L_max x d]
    std::vector<BlockT<T>> blocks;
    ParameterT<T> lnf_g, lnf_b;
    ParameterT<T> w0, b0;  // [d x V], [1 x V]
    CondEncoderT<T> cond;
    std::vector<DecodingHeadT<T>> heads;
    std::vector<LoraPairT<T>> lora;  // empty unless adapters attached

    using Named = std::pair<std::string, ParameterT<T>*>;
    std::vector<Named> named_backbone_params();  // includes cond encoder
    std::vector<Named> named_head_params();
    std::vector<Named> named_lora_params();
    std::vector<Named> named_params();  // all of the above

    const LoraPairT<T>* find_lora(const std::string& target) const {
        for (const auto& l : lora)
            if (l.target == target) return &l;
        return nullptr;
    }

    double lora_scaling() const { return cfg.lora_alpha / static_cast<double>(cfg.lora_rank); }
};

using Model = ModelT<float>;

// Deterministic initialization: N(0, 0.02) matrices, zero biases, unit LN
// gains, LoRA B zero so the adapted forward equals the base forward.
template <typename T>
ModelT<T> init_model(const BackboneConfig& cfg, uint64_t seed);

// Attach zero-initialized adapters for every backbone linear map (self/cross
// q,k,v,o; ffn w1,w2; w0).
template <typename T>
void attach_lora(ModelT<T>& m, uint64_t seed);

// W_merge = W_origin + (alpha/r) A B, applied in place; adapters removed.
template <typename T>
void merge_lora(ModelT<T>& m);

void save_model(const Model& m, const std::string& ckpt_path, const std::string& cfg_path);
Model load_model(const std::string& ckpt_path, const std::string& cfg_path);
uint64_t model_hash(Model& m, bool backbone_only);

void save_backbone_config(const BackboneConfig& cfg, const std::string& path);
BackboneConfig load_backbone_config(const std::string& path);

extern template struct ModelT<float>;
extern template struct ModelT<double>;
extern template ModelT<float> init_model<float>(const BackboneConfig&, uint64_t);
extern template ModelT<double> init_model<double>(const BackboneConfig&, uint64_t);
extern template void attach_lora<float>(ModelT<float>&, uint64_t);
extern template void attach_lora<double>(ModelT<double>&, uint64_t);
extern template void merge_lora<float>(ModelT<float>&);
extern template void merge_lora<double>(ModelT<double>&);

}  // namespace xsm
