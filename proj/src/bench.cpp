#include "xsm/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "xsm/errors.hpp"
#include "xsm/point_metrics.hpp"

namespace xsm {

std::vector<EvalCondition> make_eval_conditions(const RunConfig& rc, int64_t count,
                                                uint64_t seed_base) {
    const MeshGenOptions opts = rc.gen_options();
    const FamilyMix mix = rc.family_mix();
    const int64_t cond_points = rc.get_i64("model.cond_points");
    const int64_t gt_points = rc.get_i64("bench.points");
    const int64_t max_seq = rc.get_i64("model.max_seq");
    const Vocabulary vocab = rc.vocabulary();

    auto recs = make_corpus_manifest(count * 2, seed_base, mix, opts);
    std::vector<EvalCondition> out;
    for (const CorpusRecord& r : recs) {
        if (static_cast<int64_t>(out.size()) >= count) break;
        if (r.face_count * 9 + 1 > max_seq) continue;  // keep decodable shapes
        EvalCondition c;
        c.id = static_cast<int64_t>(out.size());
        c.seed = r.seed;
        c.gt = canonical_order(normalize_mesh(mesh_from_record(r, opts)));
        c.cond_cloud = sample_points(c.gt, cond_points, r.seed ^ 0xc0d0c0d0ull);
        c.gt_points = sample_points(c.gt, gt_points, r.seed ^ 0x6e0d0e57ull);
        out.push_back(std::move(c));
        (void)vocab;
    }
    XSM_CHECK(static_cast<int64_t>(out.size()) == count, config_error,
              "could not build enough eval conditions under model.max_seq");
    return out;
}

int64_t sanitize_sequence(TokenSequence& seq, const Vocabulary& v) {
    if (seq.tokens.empty()) return 0;
    size_t keep = 1;  // SOS
    while (keep < seq.tokens.size() && v.is_body(seq.tokens[keep])) keep++;
    int64_t dropped = 0;
    if (keep < seq.tokens.size()) {
        const bool clean_eos = seq.tokens[keep] == v.eos() && keep + 1 == seq.tokens.size();
        if (!clean_eos) {
            dropped = static_cast<int64_t>(seq.tokens.size() - keep);
            if (seq.tokens[keep] == v.eos()) dropped -= 1;  // keep the EOS itself
            seq.tokens.resize(keep);
            seq.tokens.push_back(v.eos());
        }
    } else {
        seq.tokens.push_back(v.eos());
        seq.unterminated = true;
    }
    return dropped;
}

BenchRow EvalSummary::row(const std::string& label, const EvalSummary* baseline) const {
    BenchRow r;
    r.label = label;
    r.cd = mean_cd;
    r.hd = mean_hd;
    r.scr = mean_scr;
    r.step_latency_ms = mean_step_ms;
    r.seq_latency_s = mean_seq_s;
    const double base_ms = baseline ? baseline->mean_step_ms : mean_step_ms;
    r.speedup = speedup_from(r.scr, base_ms, r.step_latency_ms);
    return r;
}

namespace {

double median_of(std::vector<double> xs) {
    XSM_CHECK(!xs.empty(), degenerate_input_error, "median of empty set");
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double trace_median_step(const DecodeTrace& t, int64_t warmup) {
    std::vector<double> xs;
    const size_t skip =
        t.iterations.size() > 2 * static_cast<size_t>(warmup) ? static_cast<size_t>(warmup) : 0;
    for (size_t i = skip; i < t.iterations.size(); i++) xs.push_back(t.iterations[i].wall_ms);
    return median_of(std::move(xs));
}

}  // namespace

EvalSummary eval_decode_config(const Model& m, std::span<const EvalCondition> conds,
                               const Vocabulary& vocab, const DecodeConfig& dc, bool use_vanilla,
                               int64_t sample_points_n, int64_t warmup_iters, int64_t workers) {
    XSM_CHECK(!conds.empty(), degenerate_input_error, "eval: no conditions");
    EvalSummary out;
    out.traces.resize(conds.size());
    out.sequences.resize(conds.size());
    std::vector<double> cds(conds.size(), -1.0), hds(conds.size(), -1.0);

    auto work = [&](size_t i) {
        InferenceEngine eng(m);
        const EvalCondition& c = conds[i];
        DecodeConfig cfg = dc;
        cfg.seed = dc.seed ^ c.seed;
        CondMemory cond = eng.encode_condition(c.cond_cloud);
        DecodeResult r = use_vanilla ? vanilla_decode(eng, cond, vocab, cfg)
                                     : decode(eng, cond, vocab, cfg);
        TokenSequence seq = r.sequence;
        sanitize_sequence(seq, vocab);
        DetokenizeResult dt = detokenize(seq, vocab);
        if (!dt.mesh.empty()) {
            try {
                const PointCloud pts = sample_points(dt.mesh, sample_points_n, c.seed ^ 0x5a5aull);
                cds[i] = chamfer_distance(pts, c.gt_points);
                hds[i] = hausdorff_distance(pts, c.gt_points);
            } catch (const degenerate_input_error&) {
                // zero-area output: no quality sample
            }
        }
        out.traces[i] = std::move(r.trace);
        out.sequences[i] = std::move(r.sequence);
    };

    if (workers <= 1) {
        for (size_t i = 0; i < conds.size(); i++) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int64_t w = 0; w < workers; w++)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < conds.size(); i = next.fetch_add(1)) work(i);
            });
        for (auto& t : pool) t.join();
    }

    double cd_sum = 0, hd_sum = 0, scr_sum = 0, step_sum = 0, seq_sum = 0;
    int64_t quality_n = 0;
    for (size_t i = 0; i < conds.size(); i++) {
        if (cds[i] >= 0.0) {
            cd_sum += cds[i];
            hd_sum += hds[i];
            quality_n++;
        } else {
            out.skipped_quality++;
        }
        scr_sum += out.traces[i].scr();
        step_sum += trace_median_step(out.traces[i], warmup_iters);
        seq_sum += out.traces[i].total_wall_ms / 1000.0;
    }
    out.mean_cd = quality_n > 0 ? cd_sum / quality_n : std::nan("");
    out.mean_hd = quality_n > 0 ? hd_sum / quality_n : std::nan("");
    out.mean_scr = scr_sum / static_cast<double>(conds.size());
    out.mean_step_ms = step_sum / static_cast<double>(conds.size());
    out.mean_seq_s = seq_sum / static_cast<double>(conds.size());
    return out;
}

BenchReport run_bench(const Model& m, const RunConfig& rc,
                      std::span<const EvalCondition> conds) {
    const Vocabulary vocab = rc.vocabulary();
    const DecodeConfig dc = rc.decode_config();
    const int64_t pts = rc.get_i64("bench.points");
    const int64_t warmup = rc.get_i64("bench.warmup_iters");
    const int64_t workers = rc.get_i64("bench.workers");

    EvalSummary vanilla = eval_decode_config(m, conds, vocab, dc, true, pts, warmup, workers);
    EvalSummary spec = eval_decode_config(m, conds, vocab, dc, false, pts, warmup, workers);
    BenchReport r;
    r.rows.push_back(vanilla.row("vanilla", nullptr));
    r.rows.push_back(spec.row("speculative", &vanilla));
    return r;
}

BenchReport run_ablate_sweep(const Model& m, const RunConfig& rc, const std::string& sweep,
                             std::span<const EvalCondition> conds) {
    const Vocabulary vocab = rc.vocabulary();
    const DecodeConfig base = rc.decode_config();
    const int64_t pts = rc.get_i64("bench.points");
    const int64_t warmup = rc.get_i64("bench.warmup_iters");
    const int64_t workers = rc.get_i64("bench.workers");

    BenchReport r;
    EvalSummary vanilla = eval_decode_config(m, conds, vocab, base, true, pts, warmup, workers);
    r.rows.push_back(vanilla.row("vanilla", nullptr));

    auto add = [&](const std::string& label, const DecodeConfig& dc) {
        EvalSummary s = eval_decode_config(m, conds, vocab, dc, false, pts, warmup, workers);
        r.rows.push_back(s.row(label, &vanilla));
    };

    if (sweep == "heads") {
        for (double dv : RunConfig::parse_grid(rc.get_str("ablate.d_grid"))) {
            const int64_t D = static_cast<int64_t>(dv);
            if (D > static_cast<int64_t>(m.heads.size())) continue;  // not trained that deep
            DecodeConfig dc = base;
            dc.heads = D;
            add("D=" + std::to_string(D), dc);
        }
    } else if (sweep == "delta") {
        for (double dl : RunConfig::parse_grid(rc.get_str("ablate.delta_grid"))) {
            DecodeConfig dc = base;
            dc.acceptance = AcceptanceRule::threshold;
            dc.delta = dl;
            std::ostringstream lbl;
            lbl << "delta=" << dl;
            add(lbl.str(), dc);
        }
    } else if (sweep == "acceptance") {
        DecodeConfig thr = base;
        thr.acceptance = AcceptanceRule::threshold;
        add("threshold", thr);
        for (double kav : RunConfig::parse_grid(rc.get_str("ablate.ka_grid"))) {
            DecodeConfig dc = base;
            dc.acceptance = AcceptanceRule::top_ka;
            dc.top_ka = static_cast<int64_t>(kav);
            add("top_ka=" + std::to_string(static_cast<int64_t>(kav)), dc);
        }
    } else if (sweep == "sampling") {
        DecodeConfig is = base;
        is.strategy = SamplingStrategy::independent;
        add("independent", is);
        for (double ksv : RunConfig::parse_grid(rc.get_str("ablate.ks_grid"))) {
            DecodeConfig dc = base;
            dc.strategy = SamplingStrategy::pts;
            dc.pts_top_ks = static_cast<int64_t>(ksv);
            add("pts_ks=" + std::to_string(static_cast<int64_t>(ksv)), dc);
        }
    } else {
        throw config_error("unknown ablate sweep: " + sweep);
    }
    return r;
}

Model with_head_kind(const Model& src, HeadKind kind, uint64_t head_seed) {
    BackboneConfig cfg = src.cfg;
    cfg.head_kind = kind;
    Model out = init_model<float>(cfg, head_seed);
    std::map<std::string, const Parameter*> from;
    for (auto& [name, p] : const_cast<Model&>(src).named_backbone_params()) from[name] = p;
    for (auto& [name, p] : out.named_backbone_params()) {
        auto it = from.find(name);
        XSM_CHECK(it != from.end(), state_error, "with_head_kind: missing " + name);
        p->value = it->second->value;
    }
    return out;
}

BenchReport run_table3(const Model& pretrained, const DistillCorpus& distill, const RunConfig& rc,
                       std::span<const EvalCondition> conds) {
    const Vocabulary vocab = rc.vocabulary();
    const DecodeConfig dc = rc.decode_config();
    const int64_t pts = rc.get_i64("bench.points");
    const int64_t warmup = rc.get_i64("bench.warmup_iters");
    const int64_t workers = rc.get_i64("bench.workers");
    const int64_t epochs = rc.get_i64("ablate.table3_epochs");

    BenchReport r;
    EvalSummary vanilla =
        eval_decode_config(pretrained, conds, vocab, dc, true, pts, warmup, workers);
    r.rows.push_back(vanilla.row("A vanilla", nullptr));

    auto run_variant = [&](HeadKind kind, bool with_lora, const std::string& label) {
        Model m = with_head_kind(pretrained, kind, rc.get_u64("model.init_seed") ^ 0x7ab1e3ull);
        TrainConfig s1 = rc.train_config(TrainStage::stage1);
        s1.epochs = epochs;
        train_heads_stage1(m, distill, s1);
        if (with_lora) {
            TrainConfig s2 = rc.train_config(TrainStage::stage2);
            s2.epochs = epochs;
            train_joint_stage2(m, distill, s2);
            merge_lora(m);
        }
        EvalSummary s = eval_decode_config(m, conds, vocab, dc, false, pts, warmup, workers);
        r.rows.push_back(s.row(label, &vanilla));
    };
    run_variant(HeadKind::mlp, false, "B mlp");
    run_variant(HeadKind::mlp, true, "C mlp+lora");
    run_variant(HeadKind::cross_attention, false, "D ca");
    run_variant(HeadKind::cross_attention, true, "E ca+lora");
    return r;
}

static const char* kCsvHeader = "label,cd,hd,scr,step_latency_ms,speedup,seq_latency_s";

void write_bench_csv(const std::string& path, const BenchReport& r) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write bench csv: " + path);
    os << kCsvHeader << "\n";
    os.precision(17);
    for (const BenchRow& row : r.rows)
        os << row.label << "," << row.cd << "," << row.hd << "," << row.scr << ","
           << row.step_latency_ms << "," << row.speedup << "," << row.seq_latency_s << "\n";
}

BenchReport read_bench_csv(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read bench csv: " + path);
    std::string line;
    XSM_CHECK(std::getline(is, line) && line == kCsvHeader, parse_error,
              "bench csv: unexpected header");
    BenchReport r;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        BenchRow row;
        std::getline(ss, row.label, ',');
        auto next_f = [&]() {
            XSM_CHECK(std::getline(ss, field, ','), parse_error, "bench csv: short row");
            return std::stod(field);
        };
        row.cd = next_f();
        row.hd = next_f();
        row.scr = next_f();
        row.step_latency_ms = next_f();
        row.speedup = next_f();
        row.seq_latency_s = next_f();
        r.rows.push_back(std::move(row));
    }
    // speedup must be recomputable from the SCR and latency columns
    const BenchRow* base = nullptr;
    for (const BenchRow& row : r.rows)
        if (row.label.find("vanilla") != std::string::npos) base = &row;
    if (base) {
        for (const BenchRow& row : r.rows) {
            const double expect = row.scr * base->step_latency_ms / row.step_latency_ms;
            XSM_CHECK(std::abs(expect - row.speedup) <= 1e-9 * std::max(1.0, expect), parse_error,
                      "bench csv: speedup column not recomputable for " + row.label);
        }
    }
    return r;
}

void write_bench_json(const std::string& path, const BenchReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const BenchRow& row : r.rows)
        rows.push_back({{"label", row.label},
                        {"cd", row.cd},
                        {"hd", row.hd},
                        {"scr", row.scr},
                        {"step_latency_ms", row.step_latency_ms},
                        {"speedup", row.speedup},
                        {"seq_latency_s", row.seq_latency_s}});
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write bench json: " + path);
    os << nlohmann::json({{"rows", rows}}).dump(2) << "\n";
}

BenchReport read_bench_json(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read bench json: " + path);
    nlohmann::json j;
    is >> j;
    BenchReport r;
    for (const auto& row : j.at("rows")) {
        BenchRow b;
        b.label = row.at("label").get<std::string>();
        b.cd = row.at("cd").get<double>();
        b.hd = row.at("hd").get<double>();
        b.scr = row.at("scr").get<double>();
        b.step_latency_ms = row.at("step_latency_ms").get<double>();
        b.speedup = row.at("speedup").get<double>();
        b.seq_latency_s = row.at("seq_latency_s").get<double>();
        r.rows.push_back(std::move(b));
    }
    return r;
}

void write_bench_text(const std::string& path, const BenchReport& r) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write bench summary: " + path);
    os << "configuration        cd        hd        scr     step_ms   speedup   seq_s\n";
    char buf[256];
    for (const BenchRow& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%-18s %9.4f %9.4f %8.3f %10.3f %8.3fx %7.2f\n",
                      row.label.c_str(), row.cd, row.hd, row.scr, row.step_latency_ms, row.speedup,
                      row.seq_latency_s);
        os << buf;
    }
}

}  // namespace xsm
