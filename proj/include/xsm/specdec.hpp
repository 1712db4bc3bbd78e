#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xsm/infer.hpp"
#include "xsm/mesh.hpp"
#include "xsm/rng.hpp"

namespace xsm {

enum class AcceptanceRule { threshold, top_ka };
enum class SamplingStrategy { independent, pts };
enum class TokenProvenance { backbone_sampled, head_verified };

struct DecodeConfig {
    int64_t heads = 4;   // D used at decode; must not exceed the model's trained heads
    double delta = 0.5;  // threshold acceptance
    AcceptanceRule acceptance = AcceptanceRule::threshold;
    int64_t top_ka = 5;  // top-K_a acceptance
    SamplingStrategy strategy = SamplingStrategy::independent;
    int64_t pts_top_ks = 2;
    double pts_prune = 1e-5;
    double temperature = 0.7;
    int64_t top_k = 0;    // 0 = off; sampling-row truncation
    int64_t max_seq = 0;  // 0 = model limit
    uint64_t seed = 0;

    void validate() const;
};

struct AcceptedToken {
    int32_t token = 0;
    TokenProvenance provenance = TokenProvenance::backbone_sampled;
    double backbone_prob = 0.0;  // raw p0 of this token at its position
};

struct IterRecord {
    int64_t s_before = 0;
    int64_t s_star = 0;
    int64_t accepted = 0;  // tokens emitted this iteration, in [1, D+1]
    double wall_ms = 0.0;
    std::vector<double> candidate_p0;  // raw p0 of every verified candidate slot
    std::vector<AcceptedToken> tokens;
    bool pts_fallback = false;
};

struct DecodeTrace {
    std::vector<IterRecord> iterations;
    int64_t total_tokens = 0;  // accepted tokens after SOS
    double total_wall_ms = 0.0;
    bool unterminated = false;

    double scr() const {
        return iterations.empty() ? 0.0
                                  : static_cast<double>(total_tokens) /
                                        static_cast<double>(iterations.size());
    }
};

struct DecodeResult {
    TokenSequence sequence;
    DecodeTrace trace;
};

struct MetricsReport {
    int64_t tokens = 0;
    int64_t steps = 0;
    double scr = 0.0;
    double step_latency_ms = 0.0;
    double baseline_latency_ms = 0.0;
    double speedup = 0.0;
    double seq_latency_s = 0.0;
};

// Sample a token id from a probability row under temperature (p^(1/T),
// renormalized; T<=0 is argmax) with optional top-k truncation. Ties resolve
// to the lower token id.
int32_t sample_row(std::span<const float> probs, double temperature, int64_t top_k, Rng& rng);

// Number of candidates accepted under the rule (0..candidates.size()).
// p0_rows holds the raw backbone distributions; row i judges candidates[i].
int64_t verify(const Tensor& p0_rows, std::span<const int32_t> candidates,
               const DecodeConfig& cfg);

// Draw the window refill: token for position s* from p0_row, then one token
// per decoding head row. Independent sampling draws each row separately.
std::vector<int32_t> resample_independent(const Tensor& p0_row,
                                          const std::vector<Tensor>& head_rows,
                                          const DecodeConfig& cfg, Rng& rng);

// Probability-tree sampling: per head row keep the top-K_s tokens, prune
// partial paths whose cumulative weight drops below `prune`, then draw one
// root-to-leaf path by its accumulated weight. Falls back to independent
// sampling when every path is pruned (reported via fallback).
std::vector<int32_t> resample_pts(const Tensor& p0_row, const std::vector<Tensor>& head_rows,
                                  const DecodeConfig& cfg, Rng& rng, bool* fallback = nullptr);

// Enumerate surviving PTS paths and their normalized probabilities (test and
// analysis hook; the sampler draws from exactly this distribution).
struct PtsPath {
    std::vector<int32_t> tokens;
    double weight = 0.0;
};
std::vector<PtsPath> pts_enumerate(const std::vector<Tensor>& head_rows, int64_t top_ks,
                                   double prune, double temperature);

// Algorithm-1 decode loop (multi-head speculative decoding).
DecodeResult decode(const InferenceEngine& eng, const CondMemory& cond, const Vocabulary& vocab,
                    const DecodeConfig& cfg);

// Classic one-token-per-forward baseline with the same sampling controls.
DecodeResult vanilla_decode(const InferenceEngine& eng, const CondMemory& cond,
                            const Vocabulary& vocab, const DecodeConfig& cfg);

// Raw backbone distributions for every next-token position of `tokens`,
// computed in one whole-prefix forward (replay/audit path).
Tensor replay_distributions(const InferenceEngine& eng, const CondMemory& cond,
                            std::span<const int32_t> tokens);

MetricsReport compute_metrics(const DecodeTrace& trace, const DecodeTrace& baseline,
                              int64_t warmup_iters = 5);
double speedup_from(double scr, double baseline_ms, double step_ms);

void write_trace(const std::string& path, const DecodeTrace& trace);
DecodeTrace read_trace(const std::string& path);

}  // namespace xsm
