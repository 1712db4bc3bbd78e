#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xsm/mesh.hpp"
#include "xsm/mesh_gen.hpp"
#include "xsm/model.hpp"
#include "xsm/specdec.hpp"

namespace xsm {

enum class TrainStage { pretrain, stage1, stage2 };
std::string train_stage_name(TrainStage s);

struct TrainConfig {
    TrainStage stage = TrainStage::pretrain;
    int64_t epochs = 30;
    int64_t batch_size = 16;
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    double head_weight_base = 0.8;  // beta_w in w(d) = beta_w^d
    double lambda_backbone = 50.0;  // stage-2 backbone loss weight
    double grad_clip = 1.0;
    double weight_decay = 0.01;
    uint64_t seed = 0;
    std::string log_path;  // JSONL step log, empty to disable
};

// One training example: conditioning cloud plus an SOS..EOS token sequence.
struct TrainExample {
    PointCloud cloud;
    std::vector<int32_t> tokens;
};

using Corpus = std::vector<TrainExample>;

struct CorpusBuildResult {
    Corpus corpus;
    int64_t skipped_too_long = 0;
};

// Tokenize manifest shapes and sample their conditioning clouds. Sequences
// whose input length would exceed max_seq are skipped (count reported).
CorpusBuildResult build_training_corpus(const std::vector<CorpusRecord>& recs,
                                        const Vocabulary& vocab, const MeshGenOptions& gen_opts,
                                        int64_t cond_points, int64_t max_seq);

// w(d) = base^d
double head_weight(int64_t d, double base);

// Weighted multi-head loss total from per-head values.
double mhd_loss(std::span<const double> per_head, double base);

// Labels for decoding head d over a sequence (offset d+1 via
// head_target_position); empty when the sequence is too short.
std::vector<int32_t> head_labels(std::span<const int32_t> tokens, int64_t d);

struct StepLog {
    int64_t step = 0;
    std::string stage;
    double lr = 0.0;
    double loss_backbone = 0.0;
    std::vector<double> loss_heads;
    double loss_total = 0.0;
    double grad_norm = 0.0;
    double clip_factor = 1.0;
};

struct TrainReport {
    std::vector<StepLog> steps;
    int64_t skipped_too_long = 0;
    double final_loss = 0.0;
};

// Teacher-forced next-token pretraining of backbone + condition encoder.
TrainReport pretrain_backbone(Model& m, const Corpus& corpus, const TrainConfig& cfg);

struct DistillRecord {
    PointCloud cloud;
    std::vector<int32_t> tokens;
};

struct DistillCorpus {
    std::vector<DistillRecord> records;
    double temperature = 0.7;
    int64_t top_k = 50;
    uint64_t seed = 0;
    int64_t empty_generations = 0;
};

// Vanilla (D=0) generations from the frozen backbone serve as head labels.
DistillCorpus generate_distill_corpus(const Model& m, const Vocabulary& vocab,
                                      std::span<const PointCloud> conditions, double temperature,
                                      int64_t top_k, uint64_t seed);

void save_distill_corpus(const std::string& path, const DistillCorpus& c);
DistillCorpus load_distill_corpus(const std::string& path);

// Stage 1: heads only, backbone frozen (bit-identical afterwards).
TrainReport train_heads_stage1(Model& m, const DistillCorpus& corpus, const TrainConfig& cfg);

// Stage 2: LoRA adapters + heads under lambda * L_backbone + L_mhd; base
// weights frozen. Adapters are attached if not already present.
TrainReport train_joint_stage2(Model& m, const DistillCorpus& corpus, const TrainConfig& cfg);

struct HeadAccuracy {
    std::vector<double> top1;  // per head d = 1..D
    std::vector<double> top5;
    double backbone_top1 = 0.0;
};

HeadAccuracy evaluate_heads(const Model& m, std::span<const DistillRecord> heldout);
void save_head_accuracy(const std::string& path, const HeadAccuracy& acc);

// Position-mean backbone cross entropy on held-out examples.
double backbone_heldout_ce(const Model& m, std::span<const DistillRecord> heldout);

// Next-token top-1 accuracy of the backbone on a training-format corpus.
double next_token_accuracy(const Model& m, const Corpus& corpus);

void write_train_log(const std::string& path, std::span<const StepLog> steps);

}  // namespace xsm
