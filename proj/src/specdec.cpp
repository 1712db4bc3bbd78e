#include "xsm/specdec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "xsm/errors.hpp"

namespace xsm {

using Clock = std::chrono::steady_clock;

void DecodeConfig::validate() const {
    XSM_CHECK(heads >= 0, config_error, "decode: heads must be >= 0");
    XSM_CHECK(delta >= 0.0 && delta < 1.0, config_error, "decode: delta must be in [0, 1)");
    XSM_CHECK(top_ka >= 1, config_error, "decode: top_ka must be >= 1");
    XSM_CHECK(pts_top_ks >= 1, config_error, "decode: pts_top_ks must be >= 1");
    XSM_CHECK(pts_prune >= 0.0, config_error, "decode: pts_prune must be >= 0");
    XSM_CHECK(top_k >= 0, config_error, "decode: top_k must be >= 0");
}

namespace {

// Indices of the k highest-probability entries, ties to the lower id.
std::vector<int32_t> top_k_ids(std::span<const float> p, int64_t k) {
    std::vector<int32_t> ids(p.size());
    for (size_t i = 0; i < p.size(); i++) ids[i] = static_cast<int32_t>(i);
    const size_t kk = std::min<size_t>(static_cast<size_t>(k), ids.size());
    std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(), [&](int32_t a, int32_t b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
    });
    ids.resize(kk);
    return ids;
}

// Temperature-adjusted sampling weights over a kept id set (ascending ids).
std::vector<double> temp_weights(std::span<const float> p, std::span<const int32_t> ids,
                                 double temperature) {
    std::vector<double> w(ids.size());
    double total = 0.0;
    for (size_t i = 0; i < ids.size(); i++) {
        const double pv = std::max(0.0, static_cast<double>(p[ids[i]]));
        w[i] = pv > 0.0 ? std::pow(pv, 1.0 / temperature) : 0.0;
        total += w[i];
    }
    if (total > 0.0)
        for (double& x : w) x /= total;
    return w;
}

}  // namespace

int32_t sample_row(std::span<const float> probs, double temperature, int64_t top_k, Rng& rng) {
    XSM_CHECK(!probs.empty(), dim_error, "sample_row: empty row");
    if (temperature <= 0.0) {
        int32_t best = 0;
        for (size_t i = 1; i < probs.size(); i++)
            if (probs[i] > probs[best]) best = static_cast<int32_t>(i);
        return best;
    }
    std::vector<int32_t> kept;
    if (top_k > 0 && top_k < static_cast<int64_t>(probs.size())) {
        kept = top_k_ids(probs, top_k);
        std::sort(kept.begin(), kept.end());
    } else {
        kept.resize(probs.size());
        for (size_t i = 0; i < probs.size(); i++) kept[i] = static_cast<int32_t>(i);
    }
    const std::vector<double> w = temp_weights(probs, kept, temperature);
    const double u = rng.next_f64();
    double acc = 0.0;
    for (size_t i = 0; i < kept.size(); i++) {
        acc += w[i];
        if (u < acc) return kept[i];
    }
    return kept.back();
}

int64_t verify(const Tensor& p0_rows, std::span<const int32_t> candidates,
               const DecodeConfig& cfg) {
    XSM_CHECK(p0_rows.rows() >= static_cast<int64_t>(candidates.size()), dim_error,
              "verify: need one distribution row per candidate");
    const int64_t V = p0_rows.cols();
    int64_t accepted = 0;
    for (size_t i = 0; i < candidates.size(); i++) {
        const int32_t c = candidates[i];
        XSM_CHECK(c >= 0 && c < V, dim_error, "verify: candidate token out of range");
        const float* row = p0_rows.data.data() + static_cast<size_t>(i) * V;
        bool ok = false;
        if (cfg.acceptance == AcceptanceRule::threshold) {
            ok = static_cast<double>(row[c]) > cfg.delta;
        } else {
            // among the top-K_a tokens, ties to the lower id
            int64_t rank = 0;
            for (int64_t t = 0; t < V; t++)
                if (row[t] > row[c] || (row[t] == row[c] && t < c)) rank++;
            ok = rank < cfg.top_ka;
        }
        if (!ok) break;
        accepted++;
    }
    return accepted;
}

std::vector<int32_t> resample_independent(const Tensor& p0_row,
                                          const std::vector<Tensor>& head_rows,
                                          const DecodeConfig& cfg, Rng& rng) {
    std::vector<int32_t> out;
    out.reserve(head_rows.size() + 1);
    out.push_back(sample_row({p0_row.data.data(), p0_row.data.size()}, cfg.temperature,
                             cfg.top_k, rng));
    for (const Tensor& row : head_rows)
        out.push_back(
            sample_row({row.data.data(), row.data.size()}, cfg.temperature, cfg.top_k, rng));
    return out;
}

std::vector<PtsPath> pts_enumerate(const std::vector<Tensor>& head_rows, int64_t top_ks,
                                   double prune, double temperature) {
    // Per layer: top-K_s token ids with their temperature-adjusted sampling
    // probabilities (normalized over the full row, as the sampler would use).
    std::vector<std::vector<int32_t>> layer_ids;
    std::vector<std::vector<double>> layer_w;
    for (const Tensor& row : head_rows) {
        std::span<const float> p(row.data.data(), row.data.size());
        std::vector<int32_t> all(p.size());
        for (size_t i = 0; i < p.size(); i++) all[i] = static_cast<int32_t>(i);
        std::vector<double> wfull = temp_weights(p, all, temperature <= 0 ? 1.0 : temperature);
        std::vector<int32_t> ids = top_k_ids(p, top_ks);
        std::vector<double> w(ids.size());
        for (size_t i = 0; i < ids.size(); i++) w[i] = wfull[static_cast<size_t>(ids[i])];
        layer_ids.push_back(std::move(ids));
        layer_w.push_back(std::move(w));
    }

    std::vector<PtsPath> paths;
    std::vector<int32_t> cur(head_rows.size());
    auto dfs = [&](auto&& self, size_t layer, double weight) -> void {
        if (weight < prune) return;  // cumulative prefix weight below threshold
        if (layer == head_rows.size()) {
            paths.push_back({cur, weight});
            return;
        }
        for (size_t i = 0; i < layer_ids[layer].size(); i++) {
            cur[layer] = layer_ids[layer][i];
            self(self, layer + 1, weight * layer_w[layer][i]);
        }
    };
    dfs(dfs, 0, 1.0);

    double total = 0.0;
    for (const PtsPath& p : paths) total += p.weight;
    if (total > 0.0)
        for (PtsPath& p : paths) p.weight /= total;
    return paths;
}

std::vector<int32_t> resample_pts(const Tensor& p0_row, const std::vector<Tensor>& head_rows,
                                  const DecodeConfig& cfg, Rng& rng, bool* fallback) {
    if (fallback) *fallback = false;
    if (head_rows.empty()) return resample_independent(p0_row, head_rows, cfg, rng);
    std::vector<PtsPath> paths =
        pts_enumerate(head_rows, cfg.pts_top_ks, cfg.pts_prune, cfg.temperature);
    if (paths.empty()) {
        if (fallback) *fallback = true;
        return resample_independent(p0_row, head_rows, cfg, rng);
    }
    std::vector<int32_t> out;
    out.reserve(head_rows.size() + 1);
    out.push_back(sample_row({p0_row.data.data(), p0_row.data.size()}, cfg.temperature,
                             cfg.top_k, rng));
    const double u = rng.next_f64();
    double acc = 0.0;
    size_t pick = paths.size() - 1;
    for (size_t i = 0; i < paths.size(); i++) {
        acc += paths[i].weight;
        if (u < acc) {
            pick = i;
            break;
        }
    }
    for (int32_t t : paths[pick].tokens) out.push_back(t);
    return out;
}

namespace {

struct LoopShared {
    const InferenceEngine& eng;
    const CondMemory& cond;
    const Vocabulary& vocab;
    const DecodeConfig& cfg;
};

DecodeResult run_decode(LoopShared ctx, int64_t D) {
    const Model& m = ctx.eng.model();
    ctx.cfg.validate();
    XSM_CHECK(D <= static_cast<int64_t>(m.heads.size()), config_error,
              "decode: model has fewer trained heads than requested");
    XSM_CHECK(ctx.vocab.size() == m.cfg.vocab, config_error,
              "decode: vocabulary size does not match the model");
    const int64_t L_max =
        ctx.cfg.max_seq > 0 ? std::min(ctx.cfg.max_seq, m.cfg.max_seq) : m.cfg.max_seq;

    Rng rng(ctx.cfg.seed);
    DecodeResult out;
    std::vector<int32_t>& seq = out.sequence.tokens;
    seq.push_back(ctx.vocab.sos());
    std::vector<int32_t> candidates;
    for (int64_t d = 0; d < D; d++)
        candidates.push_back(static_cast<int32_t>(rng.next_below(ctx.vocab.bins)));

    KVCache cache = ctx.eng.make_cache();
    int64_t s = 0;  // position of the last accepted token
    bool done = false;

    while (!done && s < L_max) {
        const auto t0 = Clock::now();
        IterRecord rec;
        rec.s_before = s;

        const int64_t w = std::min<int64_t>(D + 1, L_max - s);
        std::vector<int32_t> window;
        window.push_back(seq[static_cast<size_t>(s)]);
        for (int64_t i = 0; i + 1 < w; i++) window.push_back(candidates[static_cast<size_t>(i)]);

        XSM_CHECK(cache.len() == s, state_error, "decode: cache length diverged from prefix");
        ForwardResult fr = ctx.eng.forward_window(window, cache, ctx.cond);

        const int64_t n_cand = w - 1;
        const int64_t acc =
            verify(fr.probs, {candidates.data(), static_cast<size_t>(n_cand)}, ctx.cfg);
        for (int64_t i = 0; i < n_cand; i++)
            rec.candidate_p0.push_back(
                fr.probs.at(i, candidates[static_cast<size_t>(i)]));
        const int64_t s_star = s + 1 + acc;
        rec.s_star = s_star;

        // accepted candidates keep their verified backbone probability
        for (int64_t i = 0; i < acc; i++)
            rec.tokens.push_back({candidates[static_cast<size_t>(i)],
                                  TokenProvenance::head_verified, rec.candidate_p0[i]});

        // refill the window from position s*: backbone row + head rows at h_{s*-1}
        const int64_t star_row = acc;  // row for position s*+0 ... = s_star
        Tensor p0_row = Tensor::zeros({1, fr.probs.cols()});
        for (int64_t c = 0; c < fr.probs.cols(); c++) p0_row.at(0, c) = fr.probs.at(star_row, c);
        std::vector<Tensor> head_rows;
        head_rows.reserve(static_cast<size_t>(D));
        for (int64_t d = 1; d <= D; d++)
            head_rows.push_back(ctx.eng.head_forward(fr.hidden, star_row, ctx.cond, d));

        std::vector<int32_t> drawn;
        bool fb = false;
        if (ctx.cfg.strategy == SamplingStrategy::pts)
            drawn = resample_pts(p0_row, head_rows, ctx.cfg, rng, &fb);
        else
            drawn = resample_independent(p0_row, head_rows, ctx.cfg, rng);
        rec.pts_fallback = fb;

        rec.tokens.push_back(
            {drawn[0], TokenProvenance::backbone_sampled, p0_row.at(0, drawn[0])});
        candidates.assign(drawn.begin() + 1, drawn.end());

        // EOS accepted anywhere in this iteration terminates the sequence and
        // discards the rest (tightened loop-guard reading, see README).
        int64_t emitted = 0;
        for (const AcceptedToken& at : rec.tokens) {
            seq.push_back(at.token);
            emitted++;
            if (at.token == ctx.vocab.eos()) {
                done = true;
                break;
            }
        }
        rec.tokens.resize(static_cast<size_t>(emitted));
        rec.accepted = emitted;

        cache.rollback(std::min<int64_t>(s_star, cache.len()));
        s = s + emitted;

        rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        out.trace.total_wall_ms += rec.wall_ms;
        out.trace.total_tokens += rec.accepted;
        out.trace.iterations.push_back(std::move(rec));
    }

    if (!done) {
        out.trace.unterminated = true;
        out.sequence.unterminated = true;
    }
    return out;
}

}  // namespace

DecodeResult decode(const InferenceEngine& eng, const CondMemory& cond, const Vocabulary& vocab,
                    const DecodeConfig& cfg) {
    return run_decode({eng, cond, vocab, cfg}, cfg.heads);
}

DecodeResult vanilla_decode(const InferenceEngine& eng, const CondMemory& cond,
                            const Vocabulary& vocab, const DecodeConfig& cfg) {
    cfg.validate();
    const Model& m = eng.model();
    XSM_CHECK(vocab.size() == m.cfg.vocab, config_error,
              "vanilla_decode: vocabulary size does not match the model");
    const int64_t L_max = cfg.max_seq > 0 ? std::min(cfg.max_seq, m.cfg.max_seq) : m.cfg.max_seq;

    Rng rng(cfg.seed);
    DecodeResult out;
    std::vector<int32_t>& seq = out.sequence.tokens;
    seq.push_back(vocab.sos());
    KVCache cache = eng.make_cache();
    int64_t s = 0;
    bool done = false;

    while (!done && s < L_max) {
        const auto t0 = Clock::now();
        IterRecord rec;
        rec.s_before = s;
        const int32_t last = seq.back();
        ForwardResult fr = eng.forward_window({&last, 1}, cache, cond);
        const int32_t tok = sample_row({fr.probs.data.data(), fr.probs.data.size()},
                                       cfg.temperature, cfg.top_k, rng);
        seq.push_back(tok);
        rec.s_star = s + 1;
        rec.accepted = 1;
        rec.tokens.push_back({tok, TokenProvenance::backbone_sampled, fr.probs.at(0, tok)});
        if (tok == vocab.eos()) done = true;
        s++;
        rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        out.trace.total_wall_ms += rec.wall_ms;
        out.trace.total_tokens += 1;
        out.trace.iterations.push_back(std::move(rec));
    }
    if (!done) {
        out.trace.unterminated = true;
        out.sequence.unterminated = true;
    }
    return out;
}

Tensor replay_distributions(const InferenceEngine& eng, const CondMemory& cond,
                            std::span<const int32_t> tokens) {
    XSM_CHECK(tokens.size() >= 2, dim_error, "replay: need at least two tokens");
    KVCache cache = eng.make_cache();
    ForwardResult fr = eng.forward_window(tokens.subspan(0, tokens.size() - 1), cache, cond);
    return std::move(fr.probs);
}

namespace {

double median_step_ms(const DecodeTrace& t, int64_t warmup) {
    std::vector<double> xs;
    const size_t skip =
        t.iterations.size() > 2 * static_cast<size_t>(warmup) ? static_cast<size_t>(warmup) : 0;
    for (size_t i = skip; i < t.iterations.size(); i++) xs.push_back(t.iterations[i].wall_ms);
    XSM_CHECK(!xs.empty(), degenerate_input_error, "compute_metrics: empty trace");
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

double speedup_from(double scr, double baseline_ms, double step_ms) {
    XSM_CHECK(step_ms > 0.0 && baseline_ms > 0.0, degenerate_input_error,
              "speedup: latencies must be positive");
    return scr * baseline_ms / step_ms;
}

MetricsReport compute_metrics(const DecodeTrace& trace, const DecodeTrace& baseline,
                              int64_t warmup_iters) {
    XSM_CHECK(!trace.iterations.empty() && !baseline.iterations.empty(), degenerate_input_error,
              "compute_metrics: traces must be nonempty");
    MetricsReport r;
    r.tokens = trace.total_tokens;
    r.steps = static_cast<int64_t>(trace.iterations.size());
    r.scr = trace.scr();
    r.step_latency_ms = median_step_ms(trace, warmup_iters);
    r.baseline_latency_ms = median_step_ms(baseline, warmup_iters);
    r.speedup = speedup_from(r.scr, r.baseline_latency_ms, r.step_latency_ms);
    r.seq_latency_s = trace.total_wall_ms / 1000.0;
    return r;
}

void write_trace(const std::string& path, const DecodeTrace& trace) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write trace: " + path);
    for (size_t i = 0; i < trace.iterations.size(); i++) {
        const IterRecord& it = trace.iterations[i];
        nlohmann::json toks = nlohmann::json::array();
        for (const AcceptedToken& t : it.tokens)
            toks.push_back({{"id", t.token},
                            {"prov", t.provenance == TokenProvenance::backbone_sampled
                                         ? "backbone_sampled"
                                         : "head_verified"},
                            {"p0", t.backbone_prob}});
        nlohmann::json j = {{"iter", i},
                            {"s", it.s_before},
                            {"s_star", it.s_star},
                            {"accepted", it.accepted},
                            {"wall_ms", it.wall_ms},
                            {"cand_p0", it.candidate_p0},
                            {"tokens", toks},
                            {"pts_fallback", it.pts_fallback}};
        os << j.dump() << "\n";
    }
}

DecodeTrace read_trace(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read trace: " + path);
    DecodeTrace t;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        IterRecord it;
        it.s_before = j.at("s").get<int64_t>();
        it.s_star = j.at("s_star").get<int64_t>();
        it.accepted = j.at("accepted").get<int64_t>();
        it.wall_ms = j.at("wall_ms").get<double>();
        it.candidate_p0 = j.at("cand_p0").get<std::vector<double>>();
        it.pts_fallback = j.at("pts_fallback").get<bool>();
        for (const auto& tk : j.at("tokens")) {
            AcceptedToken at;
            at.token = tk.at("id").get<int32_t>();
            at.provenance = tk.at("prov").get<std::string>() == "backbone_sampled"
                                ? TokenProvenance::backbone_sampled
                                : TokenProvenance::head_verified;
            at.backbone_prob = tk.at("p0").get<double>();
            it.tokens.push_back(at);
        }
        t.total_tokens += it.accepted;
        t.total_wall_ms += it.wall_ms;
        t.iterations.push_back(std::move(it));
    }
    return t;
}

}  // namespace xsm
