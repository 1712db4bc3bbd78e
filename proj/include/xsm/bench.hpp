#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xsm/model.hpp"
#include "xsm/runconfig.hpp"
#include "xsm/specdec.hpp"
#include "xsm/training.hpp"

namespace xsm {

// One held-out conditioning shape: ground truth mesh, conditioning cloud, and
// the reference surface sample used for CD/HD.
struct EvalCondition {
    int64_t id = 0;
    uint64_t seed = 0;
    Mesh gt;  // normalized, canonical
    PointCloud cond_cloud;
    PointCloud gt_points;
};

std::vector<EvalCondition> make_eval_conditions(const RunConfig& rc, int64_t count,
                                                uint64_t seed_base);

struct BenchRow {
    std::string label;
    double cd = 0.0;
    double hd = 0.0;
    double scr = 0.0;
    double step_latency_ms = 0.0;
    double speedup = 0.0;
    double seq_latency_s = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

// Aggregate outcome of decoding every condition under one configuration.
struct EvalSummary {
    double mean_cd = 0.0;
    double mean_hd = 0.0;
    double mean_scr = 0.0;
    double mean_step_ms = 0.0;
    double mean_seq_s = 0.0;
    int64_t skipped_quality = 0;  // outputs without a usable mesh
    std::vector<DecodeTrace> traces;
    std::vector<TokenSequence> sequences;

    BenchRow row(const std::string& label, const EvalSummary* baseline) const;
};

// Decode every condition (vanilla baseline when use_vanilla) and aggregate
// quality + latency. Per-condition decode seed = dc.seed ^ condition.seed, so
// sweeps at equal seeds share their random draws.
EvalSummary eval_decode_config(const Model& m, std::span<const EvalCondition> conds,
                               const Vocabulary& vocab, const DecodeConfig& dc, bool use_vanilla,
                               int64_t sample_points_n, int64_t warmup_iters, int64_t workers = 1);

// Strip anything a detokenizer would reject: body truncated at the first
// non-body token. Returns the number of dropped tokens.
int64_t sanitize_sequence(TokenSequence& seq, const Vocabulary& v);

// vanilla vs speculative under the resolved config.
BenchReport run_bench(const Model& m, const RunConfig& rc,
                      std::span<const EvalCondition> conds);

// Sweeps: "heads", "delta", "acceptance", "sampling" on a trained model.
BenchReport run_ablate_sweep(const Model& m, const RunConfig& rc, const std::string& sweep,
                             std::span<const EvalCondition> conds);

// Table-3-shaped harness: A (vanilla) plus B/C (MLP heads, stage 1 / +LoRA
// stage 2) and D/E (cross-attention heads likewise), trained from the given
// pretrained backbone on the distill corpus.
BenchReport run_table3(const Model& pretrained, const DistillCorpus& distill, const RunConfig& rc,
                       std::span<const EvalCondition> conds);

// Rebuild a model with a different decoding-head kind, keeping backbone
// weights (heads freshly initialized).
Model with_head_kind(const Model& src, HeadKind kind, uint64_t head_seed);

void write_bench_csv(const std::string& path, const BenchReport& r);
BenchReport read_bench_csv(const std::string& path);  // checks speedup recomputability
void write_bench_json(const std::string& path, const BenchReport& r);
BenchReport read_bench_json(const std::string& path);
void write_bench_text(const std::string& path, const BenchReport& r);

}  // namespace xsm
