#include "prunesim/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace prunesim {

RankDynamics rank_dynamics(std::span<const double> prefill_scores,
                           const std::vector<std::vector<double>>& step_scores_series,
                           int layer) {
    const std::size_t d_ff = prefill_scores.size();
    if (d_ff < 2) throw std::invalid_argument("rank_dynamics: need at least 2 channels");
    for (const auto& s : step_scores_series) {
        if (s.size() != d_ff)
            throw std::invalid_argument("rank_dynamics: step score length != d_ff");
    }

    const std::vector<int> rank0 = invert_permutation(rank_descending(prefill_scores));
    const int half = static_cast<int>(d_ff) / 2;
    std::vector<bool> base_top(d_ff, false);
    for (std::size_t i = 0; i < d_ff; ++i) base_top[i] = rank0[i] < half;

    RankDynamics out;
    out.layer = layer;
    out.mean_rank_diff.reserve(step_scores_series.size());
    out.top_half_overlap.reserve(step_scores_series.size());
    for (const auto& s : step_scores_series) {
        const std::vector<int> rank_t = invert_permutation(rank_descending(s));
        double diff = 0.0;
        int shared = 0;
        for (std::size_t i = 0; i < d_ff; ++i) {
            diff += std::abs(rank_t[i] - rank0[i]);
            if (base_top[i] && rank_t[i] < half) ++shared;
        }
        out.mean_rank_diff.push_back(diff / static_cast<double>(d_ff));
        out.top_half_overlap.push_back(static_cast<double>(shared) / static_cast<double>(half));
    }
    return out;
}

FlopsReport ffn_flops(const ModelConfig& config, PruneMode mode, const Partition& partition,
                      int n_steps) {
    const auto dm = static_cast<std::uint64_t>(config.d_model);
    const auto dff = static_cast<std::uint64_t>(config.d_ff);
    const auto budget = static_cast<std::uint64_t>(partition.budget);
    const auto n_r = static_cast<std::uint64_t>(partition.retained.size());
    const auto n_c = static_cast<std::uint64_t>(partition.candidate.size());
    const std::uint64_t scale =
        static_cast<std::uint64_t>(config.n_layers) * static_cast<std::uint64_t>(n_steps);

    const std::uint64_t dense_pl = 3 * dm * dff;
    const std::uint64_t ideal_pl = 3 * dm * budget;
    std::uint64_t method_pl = 0;
    std::uint64_t ideal_for_overhead = ideal_pl;
    switch (mode) {
        case PruneMode::kDense:
            method_pl = dense_pl;
            ideal_for_overhead = dense_pl;
            break;
        case PruneMode::kStaticPrefill:
        case PruneMode::kRandom:
            method_pl = ideal_pl;
            break;
        case PruneMode::kPop:
            method_pl = dm * (2 * (n_r + n_c) + budget) + n_c;
            break;
        case PruneMode::kFullReeval:
            method_pl = 3 * dm * budget + dm * dff + dff;
            break;
    }

    FlopsReport rep;
    rep.dense_ffn_macs = dense_pl * scale;
    rep.ideal_pruned_ffn_macs = ideal_pl * scale;
    rep.method_ffn_macs = method_pl * scale;
    rep.overhead_pct = 100.0 *
                       (static_cast<double>(method_pl) - static_cast<double>(ideal_for_overhead)) /
                       static_cast<double>(dense_pl);
    return rep;
}

double kl_divergence(std::span<const double> q_logits, std::span<const double> p_logits) {
    if (q_logits.size() != p_logits.size())
        throw std::invalid_argument("kl_divergence: distribution sizes differ");
    const std::vector<double> q = softmax(q_logits);
    const std::vector<double> p = softmax(p_logits);
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) kl += q[i] * (std::log(q[i]) - std::log(p[i]));
    return std::max(kl, 0.0);  // clamp -0 / tiny negative round-off
}

FidelityReport fidelity(const GenerationResult& dense_trace,
                        const GenerationResult& pruned_trace) {
    if (dense_trace.steps.size() != pruned_trace.steps.size())
        throw std::invalid_argument("fidelity: traces have different lengths");
    FidelityReport rep;
    int agree = 0;
    for (std::size_t t = 0; t < dense_trace.steps.size(); ++t) {
        const auto& d = dense_trace.steps[t];
        const auto& p = pruned_trace.steps[t];
        if (d.logits.empty() || p.logits.empty())
            throw std::invalid_argument("fidelity: traces recorded without logits");
        rep.step_kl.push_back(kl_divergence(p.logits, d.logits));
        if (d.token == p.token) ++agree;
    }
    const auto n = static_cast<double>(rep.step_kl.size());
    if (!rep.step_kl.empty()) {
        double sum = 0.0;
        for (double v : rep.step_kl) sum += v;
        rep.mean_kl = sum / n;
        rep.top1_agreement = static_cast<double>(agree) / n;
    }
    return rep;
}

}  // namespace prunesim
