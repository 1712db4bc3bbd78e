#include "xsm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "xsm/errors.hpp"
#include "xsm/optim.hpp"
#include "xsm/point_metrics.hpp"
#include "xsm/train_graph.hpp"

namespace xsm {

std::string train_stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::pretrain: return "pretrain";
        case TrainStage::stage1: return "stage1";
        case TrainStage::stage2: return "stage2";
    }
    return "?";
}

CorpusBuildResult build_training_corpus(const std::vector<CorpusRecord>& recs,
                                        const Vocabulary& vocab, const MeshGenOptions& gen_opts,
                                        int64_t cond_points, int64_t max_seq) {
    CorpusBuildResult out;
    for (const CorpusRecord& r : recs) {
        const Mesh raw = mesh_from_record(r, gen_opts);
        const Mesh mesh = canonical_order(normalize_mesh(raw));
        const int64_t need = static_cast<int64_t>(mesh.faces.size()) * 9 + 2;
        if (need - 1 > max_seq) {  // input positions = tokens - 1
            out.skipped_too_long++;
            continue;
        }
        TrainExample ex;
        ex.tokens = tokenize(mesh, vocab, need).tokens;
        ex.cloud = sample_points(mesh, cond_points, r.seed ^ 0xc0d0c0d0ull);
        out.corpus.push_back(std::move(ex));
    }
    return out;
}

double head_weight(int64_t d, double base) { return std::pow(base, static_cast<double>(d)); }

double mhd_loss(std::span<const double> per_head, double base) {
    double total = 0.0;
    for (size_t d = 0; d < per_head.size(); d++)
        total += head_weight(static_cast<int64_t>(d) + 1, base) * per_head[d];
    return total;
}

std::vector<int32_t> head_labels(std::span<const int32_t> tokens, int64_t d) {
    // Input rows are positions 0..m-1 (m = tokens.size()-1); row s is labeled
    // with the token at head_target_position(s, d) while it exists.
    const int64_t m = static_cast<int64_t>(tokens.size()) - 1;
    std::vector<int32_t> out;
    for (int64_t s = 0; s < m && head_target_position(s, d) <= m; s++)
        out.push_back(tokens[static_cast<size_t>(head_target_position(s, d))]);
    return out;
}

namespace {

std::vector<Parameter*> to_ptrs(std::vector<Model::Named> named) {
    std::vector<Parameter*> out;
    out.reserve(named.size());
    for (auto& [name, p] : named) out.push_back(p);
    return out;
}

void set_trainable(std::vector<Model::Named> named, bool flag) {
    for (auto& [name, p] : named) p->trainable = flag;
}

void zero_all_grads(Model& m) {
    for (auto& [name, p] : m.named_params()) p->zero_grad();
}

void assert_zero_grads(std::vector<Model::Named> named, const std::string& who) {
    for (auto& [name, p] : named)
        for (float g : p->grad.data)
            XSM_CHECK(g == 0.0f, state_error, who + ": frozen parameter has nonzero grad: " + name);
}

double global_grad_norm(std::span<Parameter* const> params) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (float g : p->grad.data) sq += static_cast<double>(g) * g;
    return std::sqrt(sq);
}

// Shuffle, then pack into batches by length bucket so batch members have
// similar cost; PAD-free equivalent of padded bucketing (see README).
std::vector<std::vector<size_t>> make_batches(const std::vector<size_t>& lengths,
                                              int64_t batch_size, Rng& rng) {
    std::vector<size_t> idx(lengths.size());
    for (size_t i = 0; i < idx.size(); i++) idx[i] = i;
    for (size_t i = idx.size(); i > 1; i--)
        std::swap(idx[i - 1], idx[static_cast<size_t>(rng.next_below(static_cast<int64_t>(i)))]);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return lengths[a] / 128 < lengths[b] / 128; });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < idx.size(); i += static_cast<size_t>(batch_size))
        batches.emplace_back(idx.begin() + i,
                             idx.begin() + std::min(idx.size(), i + static_cast<size_t>(batch_size)));
    return batches;
}

void maybe_flush_log(const TrainConfig& cfg, const TrainReport& report) {
    if (!cfg.log_path.empty()) write_train_log(cfg.log_path, report.steps);
}

}  // namespace

TrainReport pretrain_backbone(Model& m, const Corpus& corpus, const TrainConfig& cfg) {
    XSM_CHECK(!corpus.empty(), config_error, "pretrain: empty corpus");
    set_trainable(m.named_backbone_params(), true);
    zero_all_grads(m);
    std::vector<Parameter*> params = to_ptrs(m.named_backbone_params());
    AdamW opt(params);
    opt.weight_decay = cfg.weight_decay;

    std::vector<size_t> lengths;
    for (const auto& ex : corpus) lengths.push_back(ex.tokens.size());
    Rng order_rng(cfg.seed ^ 0x07de7ull);
    const int64_t batches_per_epoch =
        static_cast<int64_t>((corpus.size() + cfg.batch_size - 1) / cfg.batch_size);
    CosineSchedule sched{cfg.lr_start, cfg.lr_end, cfg.epochs * batches_per_epoch};

    TrainReport report;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; epoch++) {
        for (const auto& batch : make_batches(lengths, cfg.batch_size, order_rng)) {
            int64_t total_positions = 0;
            for (size_t i : batch) total_positions += static_cast<int64_t>(corpus[i].tokens.size()) - 1;
            opt.zero_grad();
            double ce_sum = 0.0;
            for (size_t i : batch) {
                const TrainExample& ex = corpus[i];
                Tape tp;
                GraphBuilder<float> gb(tp, m);
                TapeVar cond = gb.condition_memory(ex.cloud);
                const auto n = ex.tokens.size();
                auto out = gb.backbone({ex.tokens.data(), n - 1}, cond);
                std::vector<int32_t> labels(ex.tokens.begin() + 1, ex.tokens.end());
                TapeVar ce = tp.cross_entropy_rows(out.probs, std::move(labels));
                ce_sum += tp.value(ce).data[0];
                tp.backward_params(ce, 1.0f / static_cast<float>(total_positions));
            }
            const double gnorm = global_grad_norm(params);
            const double factor = clip_global_norm(params, cfg.grad_clip);
            const double lr = sched.lr(step);
            opt.step(lr);
            step++;
            StepLog log;
            log.step = step;
            log.stage = train_stage_name(cfg.stage);
            log.lr = lr;
            log.loss_backbone = ce_sum / static_cast<double>(total_positions);
            log.loss_total = log.loss_backbone;
            log.grad_norm = gnorm;
            log.clip_factor = factor;
            report.steps.push_back(std::move(log));
        }
    }
    report.final_loss = report.steps.empty() ? 0.0 : report.steps.back().loss_total;
    maybe_flush_log(cfg, report);
    return report;
}

DistillCorpus generate_distill_corpus(const Model& m, const Vocabulary& vocab,
                                      std::span<const PointCloud> conditions, double temperature,
                                      int64_t top_k, uint64_t seed) {
    InferenceEngine eng(m);
    DistillCorpus out;
    out.temperature = temperature;
    out.top_k = top_k;
    out.seed = seed;
    DecodeConfig dc;
    dc.heads = 0;
    dc.temperature = temperature;
    dc.top_k = top_k;
    for (size_t i = 0; i < conditions.size(); i++) {
        dc.seed = seed ^ (0x9e3779b97f4a7c15ull * (i + 1));
        CondMemory cond = eng.encode_condition(conditions[i]);
        DecodeResult r = vanilla_decode(eng, cond, vocab, dc);
        if (r.sequence.tokens.size() <= 2) out.empty_generations++;
        out.records.push_back({conditions[i], std::move(r.sequence.tokens)});
    }
    return out;
}

void save_distill_corpus(const std::string& path, const DistillCorpus& c) {
    std::ofstream os(path, std::ios::binary);
    XSM_CHECK(os.good(), io_error, "cannot write distill corpus: " + path);
    const char magic[8] = {'X', 'S', 'M', 'C', 'O', 'R', 'P', '1'};
    os.write(magic, 8);
    auto put = [&](uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    put(static_cast<uint64_t>(c.records.size()));
    os.write(reinterpret_cast<const char*>(&c.temperature), 8);
    put(static_cast<uint64_t>(c.top_k));
    put(c.seed);
    put(static_cast<uint64_t>(c.empty_generations));
    for (const DistillRecord& r : c.records) {
        put(r.cloud.size());
        os.write(reinterpret_cast<const char*>(r.cloud.points.data()),
                 static_cast<std::streamsize>(r.cloud.size() * sizeof(Vec3)));
        put(r.tokens.size());
        os.write(reinterpret_cast<const char*>(r.tokens.data()),
                 static_cast<std::streamsize>(r.tokens.size() * sizeof(int32_t)));
    }
    XSM_CHECK(os.good(), io_error, "short write to distill corpus: " + path);
}

DistillCorpus load_distill_corpus(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    XSM_CHECK(is.good(), io_error, "cannot read distill corpus: " + path);
    char magic[8];
    is.read(magic, 8);
    XSM_CHECK(is.good() && std::string(magic, 8) == "XSMCORP1", parse_error,
              "bad distill corpus magic");
    auto get = [&]() {
        uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    DistillCorpus c;
    const uint64_t count = get();
    is.read(reinterpret_cast<char*>(&c.temperature), 8);
    c.top_k = static_cast<int64_t>(get());
    c.seed = get();
    c.empty_generations = static_cast<int64_t>(get());
    for (uint64_t i = 0; i < count; i++) {
        DistillRecord r;
        r.cloud.points.resize(get());
        is.read(reinterpret_cast<char*>(r.cloud.points.data()),
                static_cast<std::streamsize>(r.cloud.size() * sizeof(Vec3)));
        r.tokens.resize(get());
        is.read(reinterpret_cast<char*>(r.tokens.data()),
                static_cast<std::streamsize>(r.tokens.size() * sizeof(int32_t)));
        XSM_CHECK(is.good(), parse_error, "truncated distill corpus");
        c.records.push_back(std::move(r));
    }
    return c;
}

namespace {

// Per-head valid position count for a record (for batch-mean normalizers).
int64_t head_positions(size_t tokens, int64_t d) {
    const int64_t m = static_cast<int64_t>(tokens) - 1;
    return std::max<int64_t>(0, m - d);
}

struct Stage1Cache {
    Tensor hidden;
    Tensor memory;
    double backbone_ce = 0.0;  // fixed across stage 1 (backbone frozen)
};

}  // namespace

TrainReport train_heads_stage1(Model& m, const DistillCorpus& corpus, const TrainConfig& cfg) {
    XSM_CHECK(!corpus.records.empty(), config_error, "stage1: empty distill corpus");
    const int64_t D = static_cast<int64_t>(m.heads.size());
    XSM_CHECK(D >= 1, config_error, "stage1: model has no decoding heads");
    set_trainable(m.named_backbone_params(), false);
    set_trainable(m.named_head_params(), true);
    zero_all_grads(m);
    std::vector<Parameter*> params = to_ptrs(m.named_head_params());
    AdamW opt(params);
    opt.weight_decay = cfg.weight_decay;

    // Backbone is frozen: hidden rows and condition memories are fixed, so
    // compute them once.
    InferenceEngine eng(m);
    std::vector<Stage1Cache> cache;
    std::vector<size_t> lengths;
    int64_t warned_short = 0;
    for (const DistillRecord& r : corpus.records) {
        Stage1Cache c;
        CondMemory cm = eng.encode_condition(r.cloud);
        if (r.tokens.size() >= 2) {
            KVCache kv = eng.make_cache();
            ForwardResult fr =
                eng.forward_window({r.tokens.data(), r.tokens.size() - 1}, kv, cm);
            c.hidden = std::move(fr.hidden);
            double ce = 0.0;
            for (size_t s = 0; s + 1 < r.tokens.size(); s++)
                ce -= std::log(std::max<double>(fr.probs.at(static_cast<int64_t>(s),
                                                            r.tokens[s + 1]),
                                                1e-30));
            c.backbone_ce = ce;
        }
        c.memory = cm.memory;
        cache.push_back(std::move(c));
        lengths.push_back(r.tokens.size());
    }

    Rng order_rng(cfg.seed ^ 0x57a6e1ull);
    const int64_t batches_per_epoch =
        static_cast<int64_t>((corpus.records.size() + cfg.batch_size - 1) / cfg.batch_size);
    CosineSchedule sched{cfg.lr_start, cfg.lr_end, cfg.epochs * batches_per_epoch};

    TrainReport report;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; epoch++) {
        for (const auto& batch : make_batches(lengths, cfg.batch_size, order_rng)) {
            std::vector<int64_t> head_norm(static_cast<size_t>(D), 0);
            int64_t backbone_positions = 0;
            for (size_t i : batch) {
                for (int64_t d = 1; d <= D; d++)
                    head_norm[d - 1] += head_positions(corpus.records[i].tokens.size(), d);
                backbone_positions +=
                    std::max<int64_t>(0, static_cast<int64_t>(corpus.records[i].tokens.size()) - 1);
            }
            opt.zero_grad();
            std::vector<double> head_ce(static_cast<size_t>(D), 0.0);
            double backbone_ce = 0.0;
            for (size_t i : batch) {
                const DistillRecord& r = corpus.records[i];
                backbone_ce += cache[i].backbone_ce;
                if (r.tokens.size() < 3) {
                    warned_short++;
                    continue;  // no head has a labeled position
                }
                Tape tp;
                GraphBuilder<float> gb(tp, m);
                TapeVar hvar = tp.input(cache[i].hidden);
                TapeVar cvar = tp.input(cache[i].memory);
                TapeVar loss{};
                for (int64_t d = 1; d <= D; d++) {
                    auto labels = head_labels(r.tokens, d);
                    if (labels.empty() || head_norm[d - 1] == 0) continue;
                    TapeVar rows = tp.slice_rows(hvar, 0, static_cast<int64_t>(labels.size()));
                    TapeVar probs = gb.head(d, rows, cvar);
                    TapeVar ce = tp.cross_entropy_rows(probs, labels);
                    head_ce[d - 1] += tp.value(ce).data[0];
                    TapeVar term = tp.scale(ce, head_weight(d, cfg.head_weight_base) /
                                                    static_cast<double>(head_norm[d - 1]));
                    loss = loss.valid() ? tp.add(loss, term) : term;
                }
                if (loss.valid()) tp.backward_params(loss, 1.0f);
            }
            const double gnorm = global_grad_norm(params);
            const double factor = clip_global_norm(params, cfg.grad_clip);
            const double lr = sched.lr(step);
            opt.step(lr);
            step++;
            StepLog log;
            log.step = step;
            log.stage = train_stage_name(cfg.stage);
            log.lr = lr;
            log.loss_backbone =
                backbone_positions > 0 ? backbone_ce / static_cast<double>(backbone_positions) : 0.0;
            for (int64_t d = 1; d <= D; d++)
                log.loss_heads.push_back(head_norm[d - 1] > 0
                                             ? head_ce[d - 1] / static_cast<double>(head_norm[d - 1])
                                             : 0.0);
            log.loss_total = mhd_loss(log.loss_heads, cfg.head_weight_base);
            log.grad_norm = gnorm;
            log.clip_factor = factor;
            report.steps.push_back(std::move(log));
        }
    }
    if (warned_short > 0)
        std::cerr << "stage1: " << warned_short
                  << " record passes had no labeled head position (short sequence)\n";
    assert_zero_grads(m.named_backbone_params(), "stage1");
    report.final_loss = report.steps.empty() ? 0.0 : report.steps.back().loss_total;
    maybe_flush_log(cfg, report);
    return report;
}

TrainReport train_joint_stage2(Model& m, const DistillCorpus& corpus, const TrainConfig& cfg) {
    XSM_CHECK(!corpus.records.empty(), config_error, "stage2: empty distill corpus");
    const int64_t D = static_cast<int64_t>(m.heads.size());
    if (m.lora.empty()) attach_lora(m, cfg.seed);
    set_trainable(m.named_backbone_params(), false);
    set_trainable(m.named_head_params(), true);
    set_trainable(m.named_lora_params(), true);
    zero_all_grads(m);
    std::vector<Parameter*> params = to_ptrs(m.named_lora_params());
    for (Parameter* p : to_ptrs(m.named_head_params())) params.push_back(p);
    AdamW opt(params);
    opt.weight_decay = cfg.weight_decay;

    std::vector<size_t> lengths;
    for (const DistillRecord& r : corpus.records) lengths.push_back(r.tokens.size());
    Rng order_rng(cfg.seed ^ 0x57a6e2ull);
    const int64_t batches_per_epoch =
        static_cast<int64_t>((corpus.records.size() + cfg.batch_size - 1) / cfg.batch_size);
    CosineSchedule sched{cfg.lr_start, cfg.lr_end, cfg.epochs * batches_per_epoch};

    TrainReport report;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; epoch++) {
        for (const auto& batch : make_batches(lengths, cfg.batch_size, order_rng)) {
            std::vector<int64_t> head_norm(static_cast<size_t>(D), 0);
            int64_t backbone_positions = 0;
            for (size_t i : batch) {
                for (int64_t d = 1; d <= D; d++)
                    head_norm[d - 1] += head_positions(corpus.records[i].tokens.size(), d);
                backbone_positions +=
                    std::max<int64_t>(0, static_cast<int64_t>(corpus.records[i].tokens.size()) - 1);
            }
            opt.zero_grad();
            std::vector<double> head_ce(static_cast<size_t>(D), 0.0);
            double backbone_ce = 0.0;
            for (size_t i : batch) {
                const DistillRecord& r = corpus.records[i];
                if (r.tokens.size() < 2) continue;
                Tape tp;
                GraphBuilder<float> gb(tp, m);
                TapeVar cond = gb.condition_memory(r.cloud);
                auto out = gb.backbone({r.tokens.data(), r.tokens.size() - 1}, cond);
                std::vector<int32_t> labels(r.tokens.begin() + 1, r.tokens.end());
                TapeVar ce_b = tp.cross_entropy_rows(out.probs, std::move(labels));
                backbone_ce += tp.value(ce_b).data[0];
                TapeVar loss = tp.scale(
                    ce_b, cfg.lambda_backbone / static_cast<double>(backbone_positions));
                for (int64_t d = 1; d <= D; d++) {
                    auto hl = head_labels(r.tokens, d);
                    if (hl.empty() || head_norm[d - 1] == 0) continue;
                    TapeVar rows = tp.slice_rows(out.hidden, 0, static_cast<int64_t>(hl.size()));
                    TapeVar probs = gb.head(d, rows, cond);
                    TapeVar ce = tp.cross_entropy_rows(probs, hl);
                    head_ce[d - 1] += tp.value(ce).data[0];
                    loss = tp.add(loss, tp.scale(ce, head_weight(d, cfg.head_weight_base) /
                                                         static_cast<double>(head_norm[d - 1])));
                }
                tp.backward_params(loss, 1.0f);
            }
            const double gnorm = global_grad_norm(params);
            const double factor = clip_global_norm(params, cfg.grad_clip);
            const double lr = sched.lr(step);
            opt.step(lr);
            step++;
            StepLog log;
            log.step = step;
            log.stage = train_stage_name(cfg.stage);
            log.lr = lr;
            log.loss_backbone =
                backbone_positions > 0 ? backbone_ce / static_cast<double>(backbone_positions) : 0.0;
            for (int64_t d = 1; d <= D; d++)
                log.loss_heads.push_back(head_norm[d - 1] > 0
                                             ? head_ce[d - 1] / static_cast<double>(head_norm[d - 1])
                                             : 0.0);
            const double mhd = mhd_loss(log.loss_heads, cfg.head_weight_base);
            log.loss_total = cfg.lambda_backbone * log.loss_backbone + mhd;
            log.grad_norm = gnorm;
            log.clip_factor = factor;
            report.steps.push_back(std::move(log));
        }
    }
    assert_zero_grads(m.named_backbone_params(), "stage2");
    report.final_loss = report.steps.empty() ? 0.0 : report.steps.back().loss_total;
    maybe_flush_log(cfg, report);
    return report;
}

HeadAccuracy evaluate_heads(const Model& m, std::span<const DistillRecord> heldout) {
    const int64_t D = static_cast<int64_t>(m.heads.size());
    InferenceEngine eng(m);
    HeadAccuracy acc;
    acc.top1.assign(static_cast<size_t>(D), 0.0);
    acc.top5.assign(static_cast<size_t>(D), 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(D), 0);
    int64_t b_hits = 0, b_total = 0;
    for (const DistillRecord& r : heldout) {
        if (r.tokens.size() < 2) continue;
        CondMemory cm = eng.encode_condition(r.cloud);
        KVCache kv = eng.make_cache();
        ForwardResult fr = eng.forward_window({r.tokens.data(), r.tokens.size() - 1}, kv, cm);
        const int64_t V = fr.probs.cols();
        for (size_t s = 0; s + 1 < r.tokens.size(); s++) {
            const float* row = fr.probs.data.data() + s * static_cast<size_t>(V);
            int32_t best = 0;
            for (int64_t t = 1; t < V; t++)
                if (row[t] > row[best]) best = static_cast<int32_t>(t);
            b_total++;
            if (best == r.tokens[s + 1]) b_hits++;
        }
        for (int64_t d = 1; d <= D; d++) {
            const auto labels = head_labels(r.tokens, d);
            for (size_t s = 0; s < labels.size(); s++) {
                Tensor p = eng.head_forward(fr.hidden, static_cast<int64_t>(s), cm, d);
                const int32_t y = labels[s];
                int64_t rank = 0;
                for (int64_t t = 0; t < V; t++)
                    if (p.data[t] > p.data[y] || (p.data[t] == p.data[y] && t < y)) rank++;
                counts[d - 1]++;
                if (rank < 1) acc.top1[d - 1] += 1.0;
                if (rank < 5) acc.top5[d - 1] += 1.0;
            }
        }
    }
    for (int64_t d = 0; d < D; d++) {
        if (counts[d] > 0) {
            acc.top1[d] /= static_cast<double>(counts[d]);
            acc.top5[d] /= static_cast<double>(counts[d]);
        }
    }
    acc.backbone_top1 = b_total > 0 ? static_cast<double>(b_hits) / b_total : 0.0;
    return acc;
}

void save_head_accuracy(const std::string& path, const HeadAccuracy& acc) {
    nlohmann::json j = {
        {"top1", acc.top1}, {"top5", acc.top5}, {"backbone_top1", acc.backbone_top1}};
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write accuracy file: " + path);
    os << j.dump(2) << "\n";
}

double backbone_heldout_ce(const Model& m, std::span<const DistillRecord> heldout) {
    InferenceEngine eng(m);
    double ce = 0.0;
    int64_t n = 0;
    for (const DistillRecord& r : heldout) {
        if (r.tokens.size() < 2) continue;
        CondMemory cm = eng.encode_condition(r.cloud);
        KVCache kv = eng.make_cache();
        ForwardResult fr = eng.forward_window({r.tokens.data(), r.tokens.size() - 1}, kv, cm);
        for (size_t s = 0; s + 1 < r.tokens.size(); s++) {
            ce -= std::log(std::max<double>(
                fr.probs.at(static_cast<int64_t>(s), r.tokens[s + 1]), 1e-30));
            n++;
        }
    }
    return n > 0 ? ce / static_cast<double>(n) : 0.0;
}

double next_token_accuracy(const Model& m, const Corpus& corpus) {
    std::vector<DistillRecord> recs;
    for (const TrainExample& ex : corpus) recs.push_back({ex.cloud, ex.tokens});
    InferenceEngine eng(m);
    int64_t hits = 0, total = 0;
    for (const DistillRecord& r : recs) {
        if (r.tokens.size() < 2) continue;
        CondMemory cm = eng.encode_condition(r.cloud);
        KVCache kv = eng.make_cache();
        ForwardResult fr = eng.forward_window({r.tokens.data(), r.tokens.size() - 1}, kv, cm);
        const int64_t V = fr.probs.cols();
        for (size_t s = 0; s + 1 < r.tokens.size(); s++) {
            const float* row = fr.probs.data.data() + s * static_cast<size_t>(V);
            int32_t best = 0;
            for (int64_t t = 1; t < V; t++)
                if (row[t] > row[best]) best = static_cast<int32_t>(t);
            total++;
            if (best == r.tokens[s + 1]) hits++;
        }
    }
    return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

void write_train_log(const std::string& path, std::span<const StepLog> steps) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write train log: " + path);
    for (const StepLog& s : steps) {
        nlohmann::json j = {{"step", s.step},        {"stage", s.stage},
                            {"lr", s.lr},            {"loss_backbone", s.loss_backbone},
                            {"loss_heads", s.loss_heads}, {"loss_total", s.loss_total},
                            {"grad_norm", s.grad_norm},   {"clip_factor", s.clip_factor}};
        os << j.dump() << "\n";
    }
}

}  // namespace xsm
