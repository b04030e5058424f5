#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "prunesim/metrics.hpp"
#include "prunesim/rng.hpp"

using namespace prunesim;

namespace {

Partition partition_for(double r, double gamma, int d_ff) {
    PruningConfig cfg;
    cfg.mode = PruneMode::kPop;
    cfg.target_pr = r;
    cfg.gamma = gamma;
    ChannelScores scores;
    scores.step = ChannelScores::kPrefillStep;
    scores.values.resize(static_cast<std::size_t>(d_ff));
    for (int i = 0; i < d_ff; ++i)
        scores.values[static_cast<std::size_t>(i)] = static_cast<double>(d_ff - i);
    return build_partition(scores, cfg, d_ff);
}

ModelConfig dims(int d_model, int d_ff, int n_layers = 32) {
    ModelConfig c;
    c.d_model = d_model;
    c.d_ff = d_ff;
    c.n_layers = n_layers;
    c.n_heads = 32;
    c.n_kv_heads = 32;
    c.vocab = 32000;
    c.max_seq = 4096;
    return c;
}

// Brute-force overlap oracle: explicit top-half sets and set intersection.
double overlap_oracle(const std::vector<double>& base, const std::vector<double>& step) {
    const int half = static_cast<int>(base.size()) / 2;
    auto top_half = [&](const std::vector<double>& s) {
        const std::vector<int> rank = rank_descending(s);
        return std::set<int>(rank.begin(), rank.begin() + half);
    };
    const std::set<int> a = top_half(base);
    const std::set<int> b = top_half(step);
    int shared = 0;
    for (int i : a) shared += b.count(i);
    return static_cast<double>(shared) / static_cast<double>(half);
}

GenerationResult fake_trace(const std::vector<std::vector<double>>& logits,
                            const std::vector<int>& tokens) {
    GenerationResult r;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        StepRecord s;
        s.logits = logits[t];
        s.token = tokens[t];
        r.steps.push_back(std::move(s));
        r.generated.push_back(tokens[t]);
    }
    return r;
}

}  // namespace

TEST_CASE("rank_dynamics trivial and reversed cases") {
    const std::vector<double> base = {8, 7, 6, 5, 4, 3, 2, 1};
    RankDynamics same = rank_dynamics(base, {base});
    CHECK(same.mean_rank_diff[0] == 0.0);
    CHECK(same.top_half_overlap[0] == 1.0);

    std::vector<double> reversed(base.rbegin(), base.rend());
    RankDynamics rev = rank_dynamics(base, {reversed});
    CHECK(rev.top_half_overlap[0] == 0.0);
    // Reversal moves channel i from rank i to rank n-1-i.
    double expect = 0.0;
    for (int i = 0; i < 8; ++i) expect += std::abs(7 - 2 * i);
    CHECK(rev.mean_rank_diff[0] == doctest::Approx(expect / 8.0));
}

TEST_CASE("rank_dynamics matches the brute-force oracle on d_ff=8") {
    const std::vector<double> base = {0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.3, 0.6};
    const std::vector<double> s1 = {0.2, 0.9, 0.4, 0.1, 0.8, 0.3, 0.7, 0.5};
    const std::vector<double> s2 = {0.5, 0.5, 0.5, 0.5, 0.1, 0.9, 0.2, 0.4};
    const RankDynamics dyn = rank_dynamics(base, {s1, s2});
    CHECK(dyn.top_half_overlap[0] == doctest::Approx(overlap_oracle(base, s1)));
    CHECK(dyn.top_half_overlap[1] == doctest::Approx(overlap_oracle(base, s2)));
    for (double v : dyn.top_half_overlap) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double v : dyn.mean_rank_diff) {
        CHECK(v >= 0.0);
        CHECK(v <= 7.0);
    }
}

TEST_CASE("rank_dynamics validates lengths") {
    const std::vector<double> base = {1, 2, 3, 4};
    CHECK_THROWS_AS(rank_dynamics(base, {{1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("top-half overlap is symmetric and relabel-invariant") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(16), b(16);
        for (double& v : a) v = rng.next_real();
        for (double& v : b) v = rng.next_real();
        const double ab = rank_dynamics(a, {b}).top_half_overlap[0];
        const double ba = rank_dynamics(b, {a}).top_half_overlap[0];
        CHECK(ab == doctest::Approx(ba));

        // Relabel channels with a random permutation.
        std::vector<int> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = 15; i > 0; --i)
            std::swap(perm[(std::size_t)i],
                      perm[rng.next_below(static_cast<std::uint64_t>(i + 1))]);
        std::vector<double> ap(16), bp(16);
        for (int i = 0; i < 16; ++i) {
            ap[(std::size_t)perm[(std::size_t)i]] = a[(std::size_t)i];
            bp[(std::size_t)perm[(std::size_t)i]] = b[(std::size_t)i];
        }
        const double abp = rank_dynamics(ap, {bp}).top_half_overlap[0];
        CHECK(abp == doctest::Approx(ab));
    }
}

TEST_CASE("ffn_flops: dense has zero overhead") {
    const ModelConfig cfg = dims(4096, 11008);
    const FlopsReport rep = ffn_flops(cfg, PruneMode::kDense, partition_for(0.0, 0.0, 11008), 10);
    CHECK(rep.overhead_pct == 0.0);
    CHECK(rep.method_ffn_macs == rep.dense_ffn_macs);
}

TEST_CASE("ffn_flops: pop overhead at gamma=0.1 is about gamma/3 and below 4%") {
    const ModelConfig cfg = dims(4096, 11008);
    const Partition part = partition_for(0.3, 0.1, 11008);
    const FlopsReport rep = ffn_flops(cfg, PruneMode::kPop, part, 10);
    CHECK(rep.overhead_pct > 2.5);
    CHECK(rep.overhead_pct < 4.0);
    const double analytic =
        100.0 *
        (2.0 * (0.05 * 11008) * 4096 + static_cast<double>(part.candidate.size())) /
        (3.0 * 4096 * 11008);
    CHECK(rep.overhead_pct == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("ffn_flops: full re-evaluation costs one scoring pass") {
    const ModelConfig cfg = dims(4096, 11008);
    const FlopsReport rep =
        ffn_flops(cfg, PruneMode::kFullReeval, partition_for(0.299, 0.1, 11008), 10);
    CHECK(rep.overhead_pct > 32.0);
    CHECK(rep.overhead_pct < 35.0);
}

TEST_CASE("ffn_flops: static and random run at the ideal pruned cost") {
    const ModelConfig cfg = dims(4096, 11008);
    const Partition part = partition_for(0.3, 0.1, 11008);
    for (PruneMode mode : {PruneMode::kStaticPrefill, PruneMode::kRandom}) {
        const FlopsReport rep = ffn_flops(cfg, mode, part, 5);
        CHECK(rep.method_ffn_macs == rep.ideal_pruned_ffn_macs);
        CHECK(rep.overhead_pct == 0.0);
    }
}

TEST_CASE("ffn_flops: pop-minus-static grows strictly with gamma") {
    const ModelConfig cfg = dims(4096, 11008);
    std::uint64_t prev = 0;
    bool first = true;
    for (double gamma : {0.0, 0.05, 0.1, 0.2, 0.5, 1.0}) {
        const Partition part = partition_for(0.3, gamma, 11008);
        const std::uint64_t pop = ffn_flops(cfg, PruneMode::kPop, part, 1).method_ffn_macs;
        const std::uint64_t stat =
            ffn_flops(cfg, PruneMode::kStaticPrefill, part, 1).method_ffn_macs;
        const std::uint64_t diff = pop - stat;
        if (!first) CHECK(diff > prev);
        prev = diff;
        first = false;
    }
}

TEST_CASE("ffn_flops: method never undershoots the ideal pruned cost") {
    const ModelConfig cfg = dims(512, 2048, 8);
    for (double r : {0.0, 0.2, 0.5}) {
        for (double gamma : {0.0, 0.1, 0.4}) {
            const Partition part = partition_for(r, gamma, 2048);
            for (PruneMode mode : {PruneMode::kDense, PruneMode::kPop, PruneMode::kStaticPrefill,
                                   PruneMode::kFullReeval, PruneMode::kRandom}) {
                const FlopsReport rep = ffn_flops(cfg, mode, part, 3);
                CHECK(rep.method_ffn_macs >= rep.ideal_pruned_ffn_macs);
            }
        }
    }
}

TEST_CASE("fidelity: identical traces give exact zero KL and full agreement") {
    const std::vector<std::vector<double>> logits = {{1.0, 2.0, 0.5}, {0.1, -0.4, 2.2}};
    const GenerationResult a = fake_trace(logits, {1, 2});
    const GenerationResult b = fake_trace(logits, {1, 2});
    const FidelityReport rep = fidelity(a, b);
    CHECK(rep.mean_kl == 0.0);
    CHECK(rep.top1_agreement == 1.0);
    for (double kl : rep.step_kl) CHECK(kl == 0.0);
}

TEST_CASE("fidelity: mismatched lengths are an error, KL is nonnegative") {
    const GenerationResult a = fake_trace({{1.0, 0.0}}, {0});
    const GenerationResult b = fake_trace({{1.0, 0.0}, {0.0, 1.0}}, {0, 1});
    CHECK_THROWS_AS(fidelity(a, b), std::invalid_argument);

    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> p(8), q(8);
        for (double& v : p) v = 4.0 * rng.next_real() - 2.0;
        for (double& v : q) v = 4.0 * rng.next_real() - 2.0;
        CHECK(kl_divergence(q, p) >= 0.0);
    }
}
