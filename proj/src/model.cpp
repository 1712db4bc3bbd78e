#include "xsm/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "xsm/checkpoint.hpp"
#include "xsm/errors.hpp"

namespace xsm {

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "cross_attention") return HeadKind::cross_attention;
    if (s == "mlp") return HeadKind::mlp;
    throw config_error("unknown head kind: " + s);
}

std::string head_kind_name(HeadKind k) {
    return k == HeadKind::cross_attention ? "cross_attention" : "mlp";
}

void BackboneConfig::validate() const {
    XSM_CHECK(blocks > 0 && d_model > 0 && ffn_width > 0 && vocab > 3, config_error,
              "backbone config: sizes must be positive");
    XSM_CHECK(d_model % attn_heads == 0, config_error,
              "backbone config: d_model must be divisible by attn_heads");
    XSM_CHECK(max_seq >= 11, config_error, "backbone config: max_seq too small");
    XSM_CHECK(decode_heads >= 0, config_error, "backbone config: decode_heads must be >= 0");
    XSM_CHECK(lora_rank > 0, config_error, "backbone config: lora_rank must be positive");
}

namespace {

template <typename T>
void collect_attn(std::vector<typename ModelT<T>::Named>& out, const std::string& prefix,
                  AttnWeightsT<T>& a) {
    out.push_back({prefix + ".wq", &a.wq});
    out.push_back({prefix + ".wk", &a.wk});
    out.push_back({prefix + ".wv", &a.wv});
    out.push_back({prefix + ".wo", &a.wo});
}

}  // namespace

template <typename T>
std::vector<typename ModelT<T>::Named> ModelT<T>::named_backbone_params() {
    std::vector<Named> out;
    out.push_back({"tok_emb", &tok_emb});
    out.push_back({"pos_emb", &pos_emb});
    for (size_t i = 0; i < blocks.size(); i++) {
        const std::string p = "block" + std::to_string(i);
        auto& b = blocks[i];
        out.push_back({p + ".ln1.g", &b.ln1_g});
        out.push_back({p + ".ln1.b", &b.ln1_b});
        collect_attn<T>(out, p + ".self", b.self_attn);
        out.push_back({p + ".ln2.g", &b.ln2_g});
        out.push_back({p + ".ln2.b", &b.ln2_b});
        collect_attn<T>(out, p + ".cross", b.cross_attn);
        out.push_back({p + ".ln3.g", &b.ln3_g});
        out.push_back({p + ".ln3.b", &b.ln3_b});
        out.push_back({p + ".ffn.w1", &b.ffn_w1});
        out.push_back({p + ".ffn.b1", &b.ffn_b1});
        out.push_back({p + ".ffn.w2", &b.ffn_w2});
        out.push_back({p + ".ffn.b2", &b.ffn_b2});
    }
    out.push_back({"lnf.g", &lnf_g});
    out.push_back({"lnf.b", &lnf_b});
    out.push_back({"w0.w", &w0});
    out.push_back({"w0.b", &b0});
    out.push_back({"cond.w1", &cond.w1});
    out.push_back({"cond.b1", &cond.b1});
    out.push_back({"cond.w2", &cond.w2});
    out.push_back({"cond.b2", &cond.b2});
    return out;
}

template <typename T>
std::vector<typename ModelT<T>::Named> ModelT<T>::named_head_params() {
    std::vector<Named> out;
    for (size_t d = 0; d < heads.size(); d++) {
        const std::string p = "head" + std::to_string(d + 1);
        auto& h = heads[d];
        if (h.kind == HeadKind::cross_attention) {
            collect_attn<T>(out, p + ".cross", h.cross);
        } else {
            out.push_back({p + ".mlp.w1", &h.mlp_w1});
            out.push_back({p + ".mlp.b1", &h.mlp_b1});
            out.push_back({p + ".mlp.w2", &h.mlp_w2});
            out.push_back({p + ".mlp.b2", &h.mlp_b2});
        }
        out.push_back({p + ".ln.g", &h.ln_g});
        out.push_back({p + ".ln.b", &h.ln_b});
        out.push_back({p + ".wd", &h.wd});
        out.push_back({p + ".bd", &h.bd});
    }
    return out;
}

template <typename T>
std::vector<typename ModelT<T>::Named> ModelT<T>::named_lora_params() {
    std::vector<Named> out;
    for (auto& l : lora) {
        out.push_back({"lora." + l.target + ".A", &l.a});
        out.push_back({"lora." + l.target + ".B", &l.b});
    }
    return out;
}

template <typename T>
std::vector<typename ModelT<T>::Named> ModelT<T>::named_params() {
    auto out = named_backbone_params();
    for (auto& n : named_head_params()) out.push_back(n);
    for (auto& n : named_lora_params()) out.push_back(n);
    return out;
}

namespace {

template <typename T>
ParameterT<T> make_param(std::vector<int64_t> shape, const std::string& name) {
    return ParameterT<T>(TensorT<T>::zeros(std::move(shape)), name);
}

template <typename T>
void fill_normal(ParameterT<T>& p, Rng& rng, double std_dev) {
    for (auto& v : p.value.data) v = static_cast<T>(rng.next_normal() * std_dev);
}

template <typename T>
void fill_ones(ParameterT<T>& p) {
    std::fill(p.value.data.begin(), p.value.data.end(), T(1));
}

template <typename T>
AttnWeightsT<T> make_attn(int64_t d, const std::string& prefix) {
    AttnWeightsT<T> a;
    a.wq = make_param<T>({d, d}, prefix + ".wq");
    a.wk = make_param<T>({d, d}, prefix + ".wk");
    a.wv = make_param<T>({d, d}, prefix + ".wv");
    a.wo = make_param<T>({d, d}, prefix + ".wo");
    return a;
}

}  // namespace

template <typename T>
ModelT<T> init_model(const BackboneConfig& cfg, uint64_t seed) {
    cfg.validate();
    const int64_t d = cfg.d_model;
    ModelT<T> m;
    m.cfg = cfg;
    m.tok_emb = make_param<T>({cfg.vocab, d}, "tok_emb");
    m.pos_emb = make_param<T>({cfg.max_seq, d}, "pos_emb");
    m.blocks.resize(static_cast<size_t>(cfg.blocks));
    for (size_t i = 0; i < m.blocks.size(); i++) {
        const std::string p = "block" + std::to_string(i);
        auto& b = m.blocks[i];
        b.ln1_g = make_param<T>({1, d}, p + ".ln1.g");
        b.ln1_b = make_param<T>({1, d}, p + ".ln1.b");
        b.self_attn = make_attn<T>(d, p + ".self");
        b.ln2_g = make_param<T>({1, d}, p + ".ln2.g");
        b.ln2_b = make_param<T>({1, d}, p + ".ln2.b");
        b.cross_attn = make_attn<T>(d, p + ".cross");
        b.ln3_g = make_param<T>({1, d}, p + ".ln3.g");
        b.ln3_b = make_param<T>({1, d}, p + ".ln3.b");
        b.ffn_w1 = make_param<T>({d, cfg.ffn_width}, p + ".ffn.w1");
        b.ffn_b1 = make_param<T>({1, cfg.ffn_width}, p + ".ffn.b1");
        b.ffn_w2 = make_param<T>({cfg.ffn_width, d}, p + ".ffn.w2");
        b.ffn_b2 = make_param<T>({1, d}, p + ".ffn.b2");
    }
    m.lnf_g = make_param<T>({1, d}, "lnf.g");
    m.lnf_b = make_param<T>({1, d}, "lnf.b");
    m.w0 = make_param<T>({d, cfg.vocab}, "w0.w");
    m.b0 = make_param<T>({1, cfg.vocab}, "w0.b");
    m.cond.w1 = make_param<T>({3, d}, "cond.w1");
    m.cond.b1 = make_param<T>({1, d}, "cond.b1");
    m.cond.w2 = make_param<T>({d, d}, "cond.w2");
    m.cond.b2 = make_param<T>({1, d}, "cond.b2");
    m.heads.resize(static_cast<size_t>(cfg.decode_heads));
    for (size_t hd = 0; hd < m.heads.size(); hd++) {
        const std::string p = "head" + std::to_string(hd + 1);
        auto& h = m.heads[hd];
        h.kind = cfg.head_kind;
        if (h.kind == HeadKind::cross_attention) {
            h.cross = make_attn<T>(d, p + ".cross");
        } else {
            h.mlp_w1 = make_param<T>({d, 4 * d}, p + ".mlp.w1");
            h.mlp_b1 = make_param<T>({1, 4 * d}, p + ".mlp.b1");
            h.mlp_w2 = make_param<T>({4 * d, d}, p + ".mlp.w2");
            h.mlp_b2 = make_param<T>({1, d}, p + ".mlp.b2");
        }
        h.ln_g = make_param<T>({1, d}, p + ".ln.g");
        h.ln_b = make_param<T>({1, d}, p + ".ln.b");
        h.wd = make_param<T>({d, cfg.vocab}, p + ".wd");
        h.bd = make_param<T>({1, cfg.vocab}, p + ".bd");
    }

    // One stream over the registry, in order: matrices N(0, 0.02), biases and
    // LN offsets zero, LN gains one.
    Rng rng(seed);
    for (auto& [name, param] : m.named_params()) {
        const bool is_gain = name.ends_with(".g");
        const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                             name.ends_with(".b2") || name.ends_with(".bd");
        if (is_gain)
            fill_ones(*param);
        else if (!is_bias)
            fill_normal(*param, rng, 0.02);
    }
    return m;
}

template <typename T>
void attach_lora(ModelT<T>& m, uint64_t seed) {
    XSM_CHECK(m.lora.empty(), state_error, "lora adapters already attached");
    const int64_t r = m.cfg.lora_rank;
    std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> targets;
    for (size_t i = 0; i < m.blocks.size(); i++) {
        const std::string p = "block" + std::to_string(i);
        for (const char* w : {".self.wq", ".self.wk", ".self.wv", ".self.wo", ".cross.wq",
                              ".cross.wk", ".cross.wv", ".cross.wo"})
            targets.push_back({p + w, {m.cfg.d_model, m.cfg.d_model}});
        targets.push_back({p + ".ffn.w1", {m.cfg.d_model, m.cfg.ffn_width}});
        targets.push_back({p + ".ffn.w2", {m.cfg.ffn_width, m.cfg.d_model}});
    }
    targets.push_back({"w0.w", {m.cfg.d_model, m.cfg.vocab}});

    Rng rng(seed ^ 0x10ad10adull);
    for (auto& [name, dims] : targets) {
        LoraPairT<T> l;
        l.target = name;
        l.a = make_param<T>({dims.first, r}, "lora." + name + ".A");
        l.b = make_param<T>({r, dims.second}, "lora." + name + ".B");
        fill_normal(l.a, rng, 0.02);  // B stays zero: adapted forward == base forward
        m.lora.push_back(std::move(l));
    }
}

template <typename T>
void merge_lora(ModelT<T>& m) {
    if (m.lora.empty()) return;
    std::map<std::string, ParameterT<T>*> by_name;
    for (auto& [name, p] : m.named_backbone_params()) by_name[name] = p;
    const T s = static_cast<T>(m.lora_scaling());
    for (auto& l : m.lora) {
        auto it = by_name.find(l.target);
        XSM_CHECK(it != by_name.end(), state_error, "lora target not found: " + l.target);
        emap(it->second->value).noalias() += s * (emap(l.a.value) * emap(l.b.value));
    }
    m.lora.clear();
}

template struct ModelT<float>;
template struct ModelT<double>;
template ModelT<float> init_model<float>(const BackboneConfig&, uint64_t);
template ModelT<double> init_model<double>(const BackboneConfig&, uint64_t);
template void attach_lora<float>(ModelT<float>&, uint64_t);
template void attach_lora<double>(ModelT<double>&, uint64_t);
template void merge_lora<float>(ModelT<float>&);
template void merge_lora<double>(ModelT<double>&);

void save_backbone_config(const BackboneConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write model config: " + path);
    os << "model.blocks = " << cfg.blocks << "\n";
    os << "model.d_model = " << cfg.d_model << "\n";
    os << "model.attn_heads = " << cfg.attn_heads << "\n";
    os << "model.ffn_width = " << cfg.ffn_width << "\n";
    os << "model.vocab = " << cfg.vocab << "\n";
    os << "model.max_seq = " << cfg.max_seq << "\n";
    os << "model.cond_points = " << cfg.cond_points << "\n";
    os << "model.decode_heads = " << cfg.decode_heads << "\n";
    os << "model.head_kind = " << head_kind_name(cfg.head_kind) << "\n";
    os << "model.lora_rank = " << cfg.lora_rank << "\n";
    os << "model.lora_alpha = " << cfg.lora_alpha << "\n";
}

BackboneConfig load_backbone_config(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read model config: " + path);
    BackboneConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "model.blocks") cfg.blocks = std::stoll(val);
        else if (key == "model.d_model") cfg.d_model = std::stoll(val);
        else if (key == "model.attn_heads") cfg.attn_heads = std::stoll(val);
        else if (key == "model.ffn_width") cfg.ffn_width = std::stoll(val);
        else if (key == "model.vocab") cfg.vocab = std::stoll(val);
        else if (key == "model.max_seq") cfg.max_seq = std::stoll(val);
        else if (key == "model.cond_points") cfg.cond_points = std::stoll(val);
        else if (key == "model.decode_heads") cfg.decode_heads = std::stoll(val);
        else if (key == "model.head_kind") cfg.head_kind = head_kind_from_string(val);
        else if (key == "model.lora_rank") cfg.lora_rank = std::stoll(val);
        else if (key == "model.lora_alpha") cfg.lora_alpha = std::stod(val);
        else throw parse_error("unknown model config key: " + key);
    }
    cfg.validate();
    return cfg;
}

void save_model(const Model& m, const std::string& ckpt_path, const std::string& cfg_path) {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& [name, p] : const_cast<Model&>(m).named_params())
        tensors.push_back({name, &p->value});
    save_checkpoint(ckpt_path, tensors);
    save_backbone_config(m.cfg, cfg_path);
}

Model load_model(const std::string& ckpt_path, const std::string& cfg_path) {
    const BackboneConfig cfg = load_backbone_config(cfg_path);
    Model m = init_model<float>(cfg, 0);
    auto tensors = load_checkpoint(ckpt_path);
    bool has_lora = false;
    for (auto& [name, t] : tensors)
        if (name.starts_with("lora.")) has_lora = true;
    if (has_lora) attach_lora(m, 0);

    std::set<std::string> known;
    bool any_head = false, all_heads = true;
    for (auto& [name, p] : m.named_params()) {
        known.insert(name);
        auto it = tensors.find(name);
        const bool is_head = name.starts_with("head");
        if (it == tensors.end()) {
            if (is_head) {
                all_heads = false;
                continue;  // heads may be absent (pretrain-only checkpoint)
            }
            throw parse_error("checkpoint missing tensor: " + name);
        }
        if (is_head) any_head = true;
        XSM_CHECK(it->second.shape == p->value.shape, parse_error,
                  "checkpoint shape mismatch for " + name);
        p->value = std::move(it->second);
    }
    XSM_CHECK(!any_head || all_heads, parse_error,
              "checkpoint contains a partial set of head tensors");
    for (auto& [name, t] : tensors)
        XSM_CHECK(known.count(name), parse_error, "checkpoint has unknown tensor: " + name);
    return m;
}

uint64_t model_hash(Model& m, bool backbone_only) {
    auto named = backbone_only ? m.named_backbone_params() : m.named_params();
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& [name, p] : named) tensors.push_back({name, &p->value});
    return checkpoint_hash(tensors);
}

}  // namespace xsm
