#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prunesim/model.hpp"

namespace prunesim {

enum class PruneMode { kDense, kPop, kStaticPrefill, kFullReeval, kRandom };

// Names used in config files and CLI flags: dense, pop, static_prefill,
// full_reeval, random.
PruneMode parse_prune_mode(const std::string& name);
std::string to_string(PruneMode mode);

struct PruningConfig {
    double target_pr = 0.0;  // pruning ratio r applied to the FFN width
    double gamma = 0.0;      // candidate band fraction; half-width delta = gamma/2
    PruneMode mode = PruneMode::kDense;
    std::uint64_t random_seed = 0;

    double delta() const { return gamma / 2.0; }
    void validate() const;  // r in [0,1), gamma in [0,1]
};

// Per-layer nonnegative channel importance. step < 0 marks prefill
// provenance, step >= 0 the decoding step the scores were measured at.
struct ChannelScores {
    int layer = 0;
    std::vector<double> values;
    int step = kPrefillStep;

    static constexpr int kPrefillStep = -1;
    bool is_prefill() const { return step < 0; }
};

// Disjoint retained/candidate/pruned channel sets (sorted ascending) plus the
// exact per-step active budget. |P| = floor((r-delta)*d_ff + 1/2) lowest
// ranked, |R| = d_ff - floor((r+delta)*d_ff + 1/2) highest ranked,
// budget = d_ff - floor(r*d_ff + 1/2); bounds clamped to [0,1].
struct Partition {
    int layer = 0;
    std::vector<int> retained;
    std::vector<int> candidate;
    std::vector<int> pruned;
    int budget = 0;
};

// L2 norms of the down-projection columns, cached once per checkpoint.
struct DownColumnNorms {
    int layer = 0;
    std::vector<double> norms;
};

DownColumnNorms down_column_norms(const Matrix& down, int layer);

// Half-up count rounding shared by all ratio-to-count conversions.
int count_half_up(double fraction, int d_ff);

// Active-channel budget for ratio r: d_ff - floor(r*d_ff + 1/2).
int active_budget(int d_ff, double r);

// I_i = ||h_:,i||_2 * norms[i] over the tap's tokens. step tags provenance.
ChannelScores channel_importance(const FfnTap& tap, const DownColumnNorms& norms,
                                 int step = ChannelScores::kPrefillStep);

// Rank-count tri-state partition from prefill scores.
Partition build_partition(const ChannelScores& prefill_scores, const PruningConfig& cfg,
                          int d_ff);

// R plus the top (budget - |R|) candidates by step score, ties broken by
// ascending index. Exactly budget channels, never touching P.
std::vector<int> select_step_active(const Partition& partition,
                                    const ChannelScores& step_scores);

// FFN-level pruning ratio required to hit a whole-model parameter-reduction
// target when attention is preserved.
struct AttnDims {
    int d_model = 0;
    int d_ff = 0;
    int n_heads = 0;
    int n_kv_heads = 0;
    int head_dim = 0;
};

// r_ffn = target_pr * (P_attn + P_ffn) / P_ffn with
// P_attn = d_model*(2*d_model + 2*n_kv_heads*head_dim), P_ffn = 3*d_model*d_ff.
// Throws when the required FFN ratio reaches 1.
double ffn_pruning_ratio(double target_pr, const AttnDims& dims);

// Controllers implementing the per-layer FFN policies for each mode.
class PopController : public FfnController {
public:
    PopController(const PruningConfig& cfg, const Checkpoint& ckpt);

    std::vector<int> prefill_active(int layer, const FfnTap& tap) override;
    std::span<const int> decode_phase1(int layer) override;
    std::vector<int> decode_phase2(int layer, const FfnTap& tap) override;
    ScoreDigest last_step_digest(int layer) const override;

    const Partition& partition(int layer) const;

private:
    PruningConfig cfg_;
    int d_ff_;
    std::vector<DownColumnNorms> norms_;
    std::vector<Partition> partitions_;
    std::vector<std::vector<int>> phase1_;  // sorted R ∪ C per layer
    std::vector<bool> prefilled_;
    std::vector<int> step_count_;
    std::vector<ScoreDigest> digests_;
};

// Variant reusing the prefill-stage top-budget mask for every decode step.
class StaticPrefillController : public FfnController {
public:
    StaticPrefillController(const PruningConfig& cfg, const Checkpoint& ckpt);

    std::vector<int> prefill_active(int layer, const FfnTap& tap) override;
    std::span<const int> decode_phase1(int layer) override;
    std::vector<int> decode_phase2(int layer, const FfnTap& tap) override;

private:
    PruningConfig cfg_;
    int d_ff_;
    std::vector<DownColumnNorms> norms_;
    std::vector<std::vector<int>> mask_;
    std::vector<bool> prefilled_;
};

// Variant re-scoring every channel at every decode step.
class FullReevalController : public FfnController {
public:
    FullReevalController(const PruningConfig& cfg, const Checkpoint& ckpt);

    std::vector<int> prefill_active(int layer, const FfnTap& tap) override;
    std::span<const int> decode_phase1(int layer) override;
    std::vector<int> decode_phase2(int layer, const FfnTap& tap) override;
    ScoreDigest last_step_digest(int layer) const override;

private:
    PruningConfig cfg_;
    int d_ff_;
    std::vector<DownColumnNorms> norms_;
    std::vector<int> all_;
    int budget_;
    std::vector<ScoreDigest> digests_;
};

// Seeded uniform budget-size mask fixed at prefill.
class RandomController : public FfnController {
public:
    RandomController(const PruningConfig& cfg, const Checkpoint& ckpt);

    std::vector<int> prefill_active(int layer, const FfnTap& tap) override;
    std::span<const int> decode_phase1(int layer) override;
    std::vector<int> decode_phase2(int layer, const FfnTap& tap) override;

private:
    std::vector<std::vector<int>> mask_;
};

// Keep-all policy; the dense reference path.
class DenseController : public FfnController {
public:
    explicit DenseController(const Checkpoint& ckpt);
    explicit DenseController(int d_ff);

    std::vector<int> prefill_active(int layer, const FfnTap& tap) override;
    std::span<const int> decode_phase1(int layer) override;
    std::vector<int> decode_phase2(int layer, const FfnTap& tap) override;

private:
    std::vector<int> all_;
};

std::unique_ptr<FfnController> make_controller(const PruningConfig& cfg,
                                               const Checkpoint& ckpt);

}  // namespace prunesim
