#include "xsm/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "xsm/errors.hpp"

namespace xsm {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
    values_ = {
        {"corpus.count", "10000"},
        {"corpus.seed", "1"},
        {"corpus.bins", "128"},
        {"corpus.sphere_subdiv_prob", "0.5"},
        {"corpus.composite_max_parts", "4"},
        {"corpus.mix.box", "0.15"},
        {"corpus.mix.frustum", "0.15"},
        {"corpus.mix.prism", "0.20"},
        {"corpus.mix.lowpoly-sphere", "0.15"},
        {"corpus.mix.extrusion", "0.15"},
        {"corpus.mix.composite", "0.20"},
        {"corpus.holdout_fraction", "0.10"},

        {"model.blocks", "4"},
        {"model.d_model", "128"},
        {"model.attn_heads", "4"},
        {"model.ffn_width", "512"},
        {"model.max_seq", "1856"},
        {"model.cond_points", "256"},
        {"model.decode_heads", "4"},
        {"model.head_kind", "cross_attention"},
        {"model.lora_rank", "16"},
        {"model.lora_alpha", "32"},
        {"model.init_seed", "1234"},

        {"pretrain.epochs", "8"},
        {"pretrain.batch_size", "16"},
        {"pretrain.lr_start", "3e-4"},
        {"pretrain.lr_end", "3e-5"},
        {"pretrain.seed", "11"},

        {"distill.count", "1000"},
        {"distill.temperature", "0.7"},
        {"distill.top_k", "50"},
        {"distill.seed", "21"},
        {"distill.labels", "generation"},

        {"stage1.epochs", "30"},
        {"stage1.batch_size", "16"},
        {"stage1.lr_start", "5e-4"},
        {"stage1.lr_end", "5e-5"},
        {"stage1.seed", "31"},

        {"stage2.epochs", "10"},
        {"stage2.batch_size", "16"},
        {"stage2.lr_start", "1e-4"},
        {"stage2.lr_end", "1e-5"},
        {"stage2.seed", "41"},

        {"train.head_weight_base", "0.8"},
        {"train.lambda", "50"},
        {"train.grad_clip", "1.0"},
        {"train.weight_decay", "0.01"},

        {"decode.heads", "4"},
        {"decode.delta", "0.5"},
        {"decode.acceptance", "threshold"},
        {"decode.top_ka", "5"},
        {"decode.strategy", "independent"},
        {"decode.pts_top_ks", "2"},
        {"decode.pts_prune", "1e-5"},
        {"decode.temperature", "0.7"},
        {"decode.top_k", "0"},
        {"decode.seed", "99"},

        {"bench.conditions", "200"},
        {"bench.seed", "424242"},
        {"bench.points", "1024"},
        {"bench.warmup_iters", "5"},
        {"bench.workers", "1"},

        {"ablate.conditions", "16"},
        {"ablate.d_grid", "1,2,3,4,5,6"},
        {"ablate.delta_grid", "0.1,0.3,0.5,0.7,0.9"},
        {"ablate.ka_grid", "1,3,5,10"},
        {"ablate.ks_grid", "1,2,3,4"},
        {"ablate.table3_epochs", "4"},
    };
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    XSM_CHECK(it != values_.end(), config_error, "unknown config key: " + key);
    it->second = value;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read config: " + path);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        XSM_CHECK(eq != std::string::npos, config_error,
                  "config line " + std::to_string(lineno) + ": expected key = value");
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void RunConfig::apply_cli(std::vector<std::string>& args) {
    std::vector<std::string> rest;
    for (size_t i = 0; i < args.size(); i++) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) == 0) {
            std::string key = a.substr(2), value;
            const size_t eq = key.find('=');
            bool has_value = false;
            if (eq != std::string::npos) {
                value = key.substr(eq + 1);
                key = key.substr(0, eq);
                has_value = true;
            }
            if (values_.count(key)) {
                if (!has_value) {
                    XSM_CHECK(i + 1 < args.size(), config_error, "missing value for --" + key);
                    value = args[++i];
                }
                set(key, value);
                continue;
            }
        }
        rest.push_back(a);
    }
    args = std::move(rest);
}

const std::string& RunConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    XSM_CHECK(it != values_.end(), config_error, "unknown config key: " + key);
    return it->second;
}

int64_t RunConfig::get_i64(const std::string& key) const {
    try {
        return std::stoll(get_str(key));
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not an integer: " + get_str(key));
    }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        return std::stoull(get_str(key));
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not an unsigned integer: " + get_str(key));
    }
}

double RunConfig::get_f64(const std::string& key) const {
    try {
        return std::stod(get_str(key));
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not a number: " + get_str(key));
    }
}

void RunConfig::write(const std::string& path) const {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write config: " + path);
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
}

BackboneConfig RunConfig::backbone_config() const {
    BackboneConfig cfg;
    cfg.blocks = get_i64("model.blocks");
    cfg.d_model = get_i64("model.d_model");
    cfg.attn_heads = get_i64("model.attn_heads");
    cfg.ffn_width = get_i64("model.ffn_width");
    cfg.vocab = get_i64("corpus.bins") + 3;
    cfg.max_seq = get_i64("model.max_seq");
    cfg.cond_points = get_i64("model.cond_points");
    cfg.decode_heads = get_i64("model.decode_heads");
    cfg.head_kind = head_kind_from_string(get_str("model.head_kind"));
    cfg.lora_rank = get_i64("model.lora_rank");
    cfg.lora_alpha = get_f64("model.lora_alpha");
    cfg.validate();
    return cfg;
}

Vocabulary RunConfig::vocabulary() const {
    Vocabulary v;
    v.bins = static_cast<int32_t>(get_i64("corpus.bins"));
    return v;
}

MeshGenOptions RunConfig::gen_options() const {
    MeshGenOptions o;
    o.sphere_subdiv_prob = get_f64("corpus.sphere_subdiv_prob");
    o.composite_max_parts = static_cast<int>(get_i64("corpus.composite_max_parts"));
    return o;
}

FamilyMix RunConfig::family_mix() const {
    FamilyMix mix;
    mix.weights = {get_f64("corpus.mix.box"),          get_f64("corpus.mix.frustum"),
                   get_f64("corpus.mix.prism"),        get_f64("corpus.mix.lowpoly-sphere"),
                   get_f64("corpus.mix.extrusion"),    get_f64("corpus.mix.composite")};
    return mix;
}

DecodeConfig RunConfig::decode_config() const {
    DecodeConfig dc;
    dc.heads = get_i64("decode.heads");
    dc.delta = get_f64("decode.delta");
    const std::string acc = get_str("decode.acceptance");
    if (acc == "threshold")
        dc.acceptance = AcceptanceRule::threshold;
    else if (acc == "top_ka")
        dc.acceptance = AcceptanceRule::top_ka;
    else
        throw config_error("decode.acceptance must be threshold or top_ka, got " + acc);
    dc.top_ka = get_i64("decode.top_ka");
    const std::string st = get_str("decode.strategy");
    if (st == "independent")
        dc.strategy = SamplingStrategy::independent;
    else if (st == "pts")
        dc.strategy = SamplingStrategy::pts;
    else
        throw config_error("decode.strategy must be independent or pts, got " + st);
    dc.pts_top_ks = get_i64("decode.pts_top_ks");
    dc.pts_prune = get_f64("decode.pts_prune");
    dc.temperature = get_f64("decode.temperature");
    dc.top_k = get_i64("decode.top_k");
    dc.seed = get_u64("decode.seed");
    dc.validate();
    return dc;
}

TrainConfig RunConfig::train_config(TrainStage stage) const {
    TrainConfig tc;
    tc.stage = stage;
    const std::string s = train_stage_name(stage);
    tc.epochs = get_i64(s + ".epochs");
    tc.batch_size = get_i64(s + ".batch_size");
    tc.lr_start = get_f64(s + ".lr_start");
    tc.lr_end = get_f64(s + ".lr_end");
    tc.seed = get_u64(s + ".seed");
    tc.head_weight_base = get_f64("train.head_weight_base");
    tc.lambda_backbone = get_f64("train.lambda");
    tc.grad_clip = get_f64("train.grad_clip");
    tc.weight_decay = get_f64("train.weight_decay");
    XSM_CHECK(tc.lambda_backbone > 0, config_error, "train.lambda must be positive");
    XSM_CHECK(tc.head_weight_base > 0 && tc.head_weight_base <= 1, config_error,
              "train.head_weight_base must be in (0, 1]");
    return tc;
}

std::vector<double> RunConfig::parse_grid(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        try {
            out.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw config_error("bad grid entry: " + t);
        }
    }
    XSM_CHECK(!out.empty(), config_error, "empty grid");
    return out;
}

}  // namespace xsm
