#include "prunesim/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunesim/rng.hpp"

namespace prunesim {

PruneMode parse_prune_mode(const std::string& name) {
    if (name == "dense") return PruneMode::kDense;
    if (name == "pop") return PruneMode::kPop;
    if (name == "static_prefill") return PruneMode::kStaticPrefill;
    if (name == "full_reeval") return PruneMode::kFullReeval;
    if (name == "random") return PruneMode::kRandom;
    throw std::invalid_argument("unknown pruning mode: " + name);
}

std::string to_string(PruneMode mode) {
    switch (mode) {
        case PruneMode::kDense: return "dense";
        case PruneMode::kPop: return "pop";
        case PruneMode::kStaticPrefill: return "static_prefill";
        case PruneMode::kFullReeval: return "full_reeval";
        case PruneMode::kRandom: return "random";
    }
    throw std::invalid_argument("unknown pruning mode enum value");
}

void PruningConfig::validate() const {
    if (!(target_pr >= 0.0 && target_pr < 1.0))
        throw std::invalid_argument("PruningConfig: target_pr must be in [0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("PruningConfig: gamma must be in [0, 1]");
}

int count_half_up(double fraction, int d_ff) {
    return static_cast<int>(std::floor(fraction * static_cast<double>(d_ff) + 0.5));
}

int active_budget(int d_ff, double r) { return d_ff - count_half_up(r, d_ff); }

DownColumnNorms down_column_norms(const Matrix& down, int layer) {
    DownColumnNorms out;
    out.layer = layer;
    out.norms.resize(down.cols());
    for (std::size_t c = 0; c < down.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < down.rows(); ++r) acc += down(r, c) * down(r, c);
        out.norms[c] = std::sqrt(acc);
    }
    return out;
}

ChannelScores channel_importance(const FfnTap& tap, const DownColumnNorms& norms, int step) {
    const Matrix& h = tap.intermediate;
    if (h.cols() != norms.norms.size())
        throw std::invalid_argument("channel_importance: tap width != norms width");
    ChannelScores out;
    out.layer = tap.layer;
    out.step = step;
    out.values.resize(h.cols());
    for (std::size_t c = 0; c < h.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < h.rows(); ++t) acc += h(t, c) * h(t, c);
        out.values[c] = std::sqrt(acc) * norms.norms[c];
    }
    require_finite(out.values, "channel importance");
    return out;
}

Partition build_partition(const ChannelScores& prefill_scores, const PruningConfig& cfg,
                          int d_ff) {
    cfg.validate();
    if (!prefill_scores.is_prefill())
        throw std::invalid_argument("build_partition: scores must have prefill provenance");
    if (static_cast<int>(prefill_scores.values.size()) != d_ff)
        throw std::invalid_argument("build_partition: scores length != d_ff");

    const double r = cfg.target_pr;
    const double lo = std::max(r - cfg.delta(), 0.0);
    const double hi = std::min(r + cfg.delta(), 1.0);
    const int n_pruned = count_half_up(lo, d_ff);
    const int n_retained = d_ff - count_half_up(hi, d_ff);

    Partition part;
    part.layer = prefill_scores.layer;
    part.budget = active_budget(d_ff, r);

    const std::vector<int> rank = rank_descending(prefill_scores.values);
    part.retained.assign(rank.begin(), rank.begin() + n_retained);
    part.candidate.assign(rank.begin() + n_retained, rank.end() - n_pruned);
    part.pruned.assign(rank.end() - n_pruned, rank.end());
    std::sort(part.retained.begin(), part.retained.end());
    std::sort(part.candidate.begin(), part.candidate.end());
    std::sort(part.pruned.begin(), part.pruned.end());
    return part;
}

namespace {

// Top (budget - |R|) of the candidate set by `values`, ties by ascending
// index, unioned with R. Shared by step selection and the prefill mask.
std::vector<int> pick_active(const Partition& part, const std::vector<double>& values) {
    const int want = part.budget - static_cast<int>(part.retained.size());
    if (want < 0)
        throw std::invalid_argument("select: budget below |R|");
    if (want > static_cast<int>(part.candidate.size()))
        throw std::invalid_argument("select: budget exceeds |R| + |Cand|");

    std::vector<int> cand = part.candidate;
    std::sort(cand.begin(), cand.end(), [&](int a, int b) {
        const double va = values[static_cast<std::size_t>(a)];
        const double vb = values[static_cast<std::size_t>(b)];
        if (va != vb) return va > vb;
        return a < b;
    });
    std::vector<int> active = part.retained;
    active.insert(active.end(), cand.begin(), cand.begin() + want);
    std::sort(active.begin(), active.end());
    return active;
}

ScoreDigest digest_over(const std::vector<double>& values, const std::vector<int>& subset) {
    ScoreDigest d;
    if (subset.empty()) return d;
    d.count = static_cast<int>(subset.size());
    d.min = values[static_cast<std::size_t>(subset[0])];
    d.max = d.min;
    double sum = 0.0;
    for (int i : subset) {
        const double v = values[static_cast<std::size_t>(i)];
        d.min = std::min(d.min, v);
        d.max = std::max(d.max, v);
        sum += v;
    }
    d.mean = sum / static_cast<double>(d.count);
    return d;
}

std::vector<int> iota_channels(int d_ff) {
    std::vector<int> v(static_cast<std::size_t>(d_ff));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

std::vector<DownColumnNorms> norms_per_layer(const Checkpoint& ckpt) {
    std::vector<DownColumnNorms> out;
    out.reserve(ckpt.layers.size());
    for (std::size_t l = 0; l < ckpt.layers.size(); ++l)
        out.push_back(down_column_norms(ckpt.layers[l].down, static_cast<int>(l)));
    return out;
}

// Step scores for the channels in `subset` of a single-token tap; other
// entries stay zero and are never consulted.
ChannelScores step_scores_for(const FfnTap& tap, const DownColumnNorms& norms,
                              const std::vector<int>& subset, int step) {
    const Matrix& h = tap.intermediate;
    if (h.rows() != 1) throw std::invalid_argument("step scores: expected a single-token tap");
    ChannelScores s;
    s.layer = tap.layer;
    s.step = step;
    s.values.assign(h.cols(), 0.0);
    for (int c : subset) {
        const auto ci = static_cast<std::size_t>(c);
        s.values[ci] = std::abs(h(0, ci)) * norms.norms[ci];
    }
    return s;
}

}  // namespace

std::vector<int> select_step_active(const Partition& partition,
                                    const ChannelScores& step_scores) {
    if (step_scores.is_prefill())
        throw std::invalid_argument("select_step_active: scores must have decode provenance");
    return pick_active(partition, step_scores.values);
}

double ffn_pruning_ratio(double target_pr, const AttnDims& dims) {
    if (!(target_pr >= 0.0 && target_pr < 1.0))
        throw std::invalid_argument("ffn_pruning_ratio: target_pr must be in [0, 1)");
    if (dims.d_model <= 0 || dims.d_ff <= 0 || dims.n_kv_heads <= 0 || dims.head_dim <= 0)
        throw std::invalid_argument("ffn_pruning_ratio: dimensions must be positive");
    const double dm = dims.d_model;
    const double p_attn = dm * (2.0 * dm + 2.0 * dims.n_kv_heads * dims.head_dim);
    const double p_ffn = 3.0 * dm * dims.d_ff;
    const double r_ffn = target_pr * (p_attn + p_ffn) / p_ffn;
    if (r_ffn >= 1.0)
        throw std::invalid_argument(
            "ffn_pruning_ratio: target unreachable without attention pruning");
    return r_ffn;
}

// ---------------------------------------------------------------------------
// PopController

PopController::PopController(const PruningConfig& cfg, const Checkpoint& ckpt)
    : cfg_(cfg),
      d_ff_(ckpt.config.d_ff),
      norms_(norms_per_layer(ckpt)),
      partitions_(ckpt.layers.size()),
      phase1_(ckpt.layers.size()),
      prefilled_(ckpt.layers.size(), false),
      step_count_(ckpt.layers.size(), 0),
      digests_(ckpt.layers.size()) {
    cfg_.validate();
    if (cfg_.mode != PruneMode::kPop)
        throw std::invalid_argument("PopController: config mode is not pop");
}

std::vector<int> PopController::prefill_active(int layer, const FfnTap& tap) {
    const auto li = static_cast<std::size_t>(layer);
    const ChannelScores scores = channel_importance(tap, norms_[li]);
    partitions_[li] = build_partition(scores, cfg_, d_ff_);
    const Partition& part = partitions_[li];

    std::vector<int> phase1 = part.retained;
    phase1.insert(phase1.end(), part.candidate.begin(), part.candidate.end());
    std::sort(phase1.begin(), phase1.end());
    phase1_[li] = std::move(phase1);
    prefilled_[li] = true;

    // Prefill's own down projection runs budget-exact: R plus the top
    // candidates by the prefill scores.
    return pick_active(part, scores.values);
}

std::span<const int> PopController::decode_phase1(int layer) {
    const auto li = static_cast<std::size_t>(layer);
    if (!prefilled_[li])
        throw std::logic_error("PopController: decode consulted before prefill");
    return phase1_[li];
}

std::vector<int> PopController::decode_phase2(int layer, const FfnTap& tap) {
    const auto li = static_cast<std::size_t>(layer);
    if (!prefilled_[li])
        throw std::logic_error("PopController: decode consulted before prefill");
    const Partition& part = partitions_[li];
    const ChannelScores scores =
        step_scores_for(tap, norms_[li], part.candidate, step_count_[li]);
    step_count_[li] += 1;
    digests_[li] = digest_over(scores.values, part.candidate);
    return select_step_active(part, scores);
}

ScoreDigest PopController::last_step_digest(int layer) const {
    return digests_[static_cast<std::size_t>(layer)];
}

const Partition& PopController::partition(int layer) const {
    const auto li = static_cast<std::size_t>(layer);
    if (!prefilled_[li])
        throw std::logic_error("PopController: partition requested before prefill");
    return partitions_[li];
}

// ---------------------------------------------------------------------------
// StaticPrefillController

StaticPrefillController::StaticPrefillController(const PruningConfig& cfg,
                                                 const Checkpoint& ckpt)
    : cfg_(cfg),
      d_ff_(ckpt.config.d_ff),
      norms_(norms_per_layer(ckpt)),
      mask_(ckpt.layers.size()),
      prefilled_(ckpt.layers.size(), false) {
    cfg_.validate();
}

std::vector<int> StaticPrefillController::prefill_active(int layer, const FfnTap& tap) {
    const auto li = static_cast<std::size_t>(layer);
    const ChannelScores scores = channel_importance(tap, norms_[li]);
    const std::vector<int> rank = rank_descending(scores.values);
    const int budget = active_budget(d_ff_, cfg_.target_pr);
    std::vector<int> mask(rank.begin(), rank.begin() + budget);
    std::sort(mask.begin(), mask.end());
    mask_[li] = std::move(mask);
    prefilled_[li] = true;
    return mask_[li];
}

std::span<const int> StaticPrefillController::decode_phase1(int layer) {
    const auto li = static_cast<std::size_t>(layer);
    if (!prefilled_[li])
        throw std::logic_error("StaticPrefillController: decode consulted before prefill");
    return mask_[li];
}

std::vector<int> StaticPrefillController::decode_phase2(int layer, const FfnTap&) {
    const auto li = static_cast<std::size_t>(layer);
    if (!prefilled_[li])
        throw std::logic_error("StaticPrefillController: decode consulted before prefill");
    return mask_[li];
}

// ---------------------------------------------------------------------------
// FullReevalController

FullReevalController::FullReevalController(const PruningConfig& cfg, const Checkpoint& ckpt)
    : cfg_(cfg),
      d_ff_(ckpt.config.d_ff),
      norms_(norms_per_layer(ckpt)),
      all_(iota_channels(ckpt.config.d_ff)),
      budget_(0),
      digests_(ckpt.layers.size()) {
    cfg_.validate();
    budget_ = active_budget(d_ff_, cfg_.target_pr);
}

std::vector<int> FullReevalController::prefill_active(int layer, const FfnTap& tap) {
    const auto li = static_cast<std::size_t>(layer);
    const ChannelScores scores = channel_importance(tap, norms_[li]);
    const std::vector<int> rank = rank_descending(scores.values);
    std::vector<int> mask(rank.begin(), rank.begin() + budget_);
    std::sort(mask.begin(), mask.end());
    return mask;
}

std::span<const int> FullReevalController::decode_phase1(int) { return all_; }

std::vector<int> FullReevalController::decode_phase2(int layer, const FfnTap& tap) {
    const auto li = static_cast<std::size_t>(layer);
    const ChannelScores scores = step_scores_for(tap, norms_[li], all_, 0);
    digests_[li] = digest_over(scores.values, all_);
    const std::vector<int> rank = rank_descending(scores.values);
    std::vector<int> active(rank.begin(), rank.begin() + budget_);
    std::sort(active.begin(), active.end());
    return active;
}

ScoreDigest FullReevalController::last_step_digest(int layer) const {
    return digests_[static_cast<std::size_t>(layer)];
}

// ---------------------------------------------------------------------------
// RandomController

RandomController::RandomController(const PruningConfig& cfg, const Checkpoint& ckpt)
    : mask_(ckpt.layers.size()) {
    cfg.validate();
    const int d_ff = ckpt.config.d_ff;
    const int budget = active_budget(d_ff, cfg.target_pr);
    for (std::size_t l = 0; l < mask_.size(); ++l) {
        // Partial Fisher-Yates: a uniform budget-size subset per layer.
        std::vector<int> pool = iota_channels(d_ff);
        Rng rng(Rng::mix(cfg.random_seed, static_cast<std::uint64_t>(l)));
        for (int i = 0; i < budget; ++i) {
            const auto j = i + static_cast<int>(rng.next_below(
                                   static_cast<std::uint64_t>(d_ff - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        std::vector<int> mask(pool.begin(), pool.begin() + budget);
        std::sort(mask.begin(), mask.end());
        mask_[l] = std::move(mask);
    }
}

std::vector<int> RandomController::prefill_active(int layer, const FfnTap&) {
    return mask_[static_cast<std::size_t>(layer)];
}

std::span<const int> RandomController::decode_phase1(int layer) {
    return mask_[static_cast<std::size_t>(layer)];
}

std::vector<int> RandomController::decode_phase2(int layer, const FfnTap&) {
    return mask_[static_cast<std::size_t>(layer)];
}

// ---------------------------------------------------------------------------
// DenseController

DenseController::DenseController(const Checkpoint& ckpt) : all_(iota_channels(ckpt.config.d_ff)) {}
DenseController::DenseController(int d_ff) : all_(iota_channels(d_ff)) {}

std::vector<int> DenseController::prefill_active(int, const FfnTap&) { return all_; }
std::span<const int> DenseController::decode_phase1(int) { return all_; }
std::vector<int> DenseController::decode_phase2(int, const FfnTap&) { return all_; }

std::unique_ptr<FfnController> make_controller(const PruningConfig& cfg,
                                               const Checkpoint& ckpt) {
    switch (cfg.mode) {
        case PruneMode::kDense: return std::make_unique<DenseController>(ckpt);
        case PruneMode::kPop: return std::make_unique<PopController>(cfg, ckpt);
        case PruneMode::kStaticPrefill:
            return std::make_unique<StaticPrefillController>(cfg, ckpt);
        case PruneMode::kFullReeval: return std::make_unique<FullReevalController>(cfg, ckpt);
        case PruneMode::kRandom: return std::make_unique<RandomController>(cfg, ckpt);
    }
    throw std::invalid_argument("make_controller: unknown mode");
}

}  // namespace prunesim
