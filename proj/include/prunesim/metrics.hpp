#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prunesim/model.hpp"
#include "prunesim/pruning.hpp"

namespace prunesim {

// Per-step rank drift of step-wise importance against the prefill ranking.
struct RankDynamics {
    int layer = 0;
    std::vector<double> mean_rank_diff;    // raw rank units, in [0, d_ff-1]
    std::vector<double> top_half_overlap;  // in [0, 1]
};

// rank0 comes from prefill_scores; rank_t from each step's full-width scores
// (so the series must come from a dense or full_reeval run).
// mean_rank_diff(t) = mean_i |rank_t(i) - rank0(i)|;
// top_half_overlap(t) = |TopHalf(rank0) ∩ TopHalf(rank_t)| / floor(d_ff/2).
RankDynamics rank_dynamics(std::span<const double> prefill_scores,
                           const std::vector<std::vector<double>>& step_scores_series,
                           int layer = 0);

// Multiply-accumulate counts for the FFN paths over a whole generation.
struct FlopsReport {
    std::uint64_t dense_ffn_macs = 0;
    std::uint64_t ideal_pruned_ffn_macs = 0;
    std::uint64_t method_ffn_macs = 0;
    double overhead_pct = 0.0;  // 100 * (method - ideal) / dense
};

// Analytic per-token-per-layer MAC accounting, scaled by n_layers * n_steps:
//   dense        3*d_model*d_ff
//   static/random ideal = 3*d_model*budget
//   pop          d_model*(2*(|R|+|C|) + budget) + |C|
//   full_reeval  3*d_model*budget + d_model*d_ff + d_ff
// Scoring is one multiply per scored channel over the weight row plus the
// cached-norm multiply; activation and norm FLOPs are ignored throughout.
FlopsReport ffn_flops(const ModelConfig& config, PruneMode mode, const Partition& partition,
                      int n_steps);

// Desk-scale output fidelity: per-step KL of the pruned next-token
// distribution from the dense one, plus greedy top-1 agreement.
struct FidelityReport {
    std::vector<double> step_kl;
    double mean_kl = 0.0;
    double top1_agreement = 0.0;
};

FidelityReport fidelity(const GenerationResult& dense_trace,
                        const GenerationResult& pruned_trace);

// D(q || p) over softmaxed logits.
double kl_divergence(std::span<const double> q_logits, std::span<const double> p_logits);

}  // namespace prunesim
