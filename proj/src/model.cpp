#include "prunesim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prunesim/rng.hpp"

namespace prunesim {

void ModelConfig::validate() const {
    if (d_model <= 0 || d_ff <= 0 || n_layers <= 0 || n_heads <= 0 || n_kv_heads <= 0 ||
        vocab <= 0 || max_seq <= 0)
        throw std::invalid_argument("ModelConfig: all dimensions must be positive");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
    if (n_heads % n_kv_heads != 0)
        throw std::invalid_argument("ModelConfig: n_heads must be divisible by n_kv_heads");
    if (d_ff < 8)
        throw std::invalid_argument("ModelConfig: d_ff must be at least 8");
}

namespace {

// Tensor kinds, part of the checkpoint seeding schedule and file layout.
enum TensorKind : std::uint64_t {
    kTokEmbedding = 0,
    kPosEmbedding = 1,
    kFinalNorm = 2,
    kWq = 3,
    kWk = 4,
    kWv = 5,
    kWo = 6,
    kAttnNorm = 7,
    kFfnNorm = 8,
    kGate = 9,
    kUp = 10,
    kDown = 11,
};

// layer = -1 for the three global tensors.
std::uint64_t tensor_seed(std::uint64_t base, int layer, TensorKind kind) {
    return Rng::mix(Rng::mix(base, static_cast<std::uint64_t>(layer + 1)),
                    static_cast<std::uint64_t>(kind));
}

Matrix draw_matrix(std::uint64_t base, int layer, TensorKind kind, std::size_t rows,
                   std::size_t cols, double scale) {
    Matrix m(rows, cols);
    Rng rng(tensor_seed(base, layer, kind));
    for (double& v : m.data()) v = (2.0 * rng.next_real() - 1.0) * scale;
    return m;
}

}  // namespace

Checkpoint init_checkpoint(const ModelConfig& config) {
    config.validate();
    const std::uint64_t base = config.seed;
    const auto dm = static_cast<std::size_t>(config.d_model);
    const auto dff = static_cast<std::size_t>(config.d_ff);
    const auto kv = static_cast<std::size_t>(config.kv_dim());

    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.tok_embedding =
        draw_matrix(base, -1, kTokEmbedding, static_cast<std::size_t>(config.vocab), dm, 1.0);
    ckpt.pos_embedding =
        draw_matrix(base, -1, kPosEmbedding, static_cast<std::size_t>(config.max_seq), dm, 1.0);
    ckpt.final_norm.assign(dm, 1.0);

    const double inv_sqrt_dm = 1.0 / std::sqrt(static_cast<double>(dm));
    const double inv_sqrt_dff = 1.0 / std::sqrt(static_cast<double>(dff));
    ckpt.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        LayerWeights& w = ckpt.layers[static_cast<std::size_t>(l)];
        w.wq = draw_matrix(base, l, kWq, dm, dm, inv_sqrt_dm);
        w.wk = draw_matrix(base, l, kWk, kv, dm, inv_sqrt_dm);
        w.wv = draw_matrix(base, l, kWv, kv, dm, inv_sqrt_dm);
        w.wo = draw_matrix(base, l, kWo, dm, dm, inv_sqrt_dm);
        w.attn_norm.assign(dm, 1.0);
        w.ffn_norm.assign(dm, 1.0);
        w.gate = draw_matrix(base, l, kGate, dff, dm, inv_sqrt_dm);
        w.up = draw_matrix(base, l, kUp, dff, dm, inv_sqrt_dm);
        w.down = draw_matrix(base, l, kDown, dm, dff, inv_sqrt_dff);
    }
    return ckpt;
}

KvCache::KvCache(const ModelConfig& config) {
    config.validate();
    capacity_ = config.max_seq;
    keys_.assign(static_cast<std::size_t>(config.n_layers),
                 Matrix(static_cast<std::size_t>(config.max_seq),
                        static_cast<std::size_t>(config.kv_dim())));
    values_ = keys_;
}

void KvCache::advance() {
    if (length_ >= capacity_) throw std::invalid_argument("KvCache: overflow past max_seq");
    ++length_;
}

void KvCache::advance_to(int len) {
    if (len > capacity_) throw std::invalid_argument("KvCache: overflow past max_seq");
    if (len < length_) throw std::invalid_argument("KvCache: cannot rewind");
    length_ = len;
}

namespace {

// Attention for the single position `pos`: writes this position's K/V rows
// for `layer`, then attends over rows [0, pos].
std::vector<double> attend_one(const Checkpoint& ckpt, int layer, KvCache& cache,
                               std::span<const double> x_normed, int pos) {
    const ModelConfig& cfg = ckpt.config;
    const LayerWeights& w = ckpt.layers[static_cast<std::size_t>(layer)];
    const int hd = cfg.head_dim();
    const int group = cfg.n_heads / cfg.n_kv_heads;

    const std::vector<double> q = matvec(w.wq, x_normed);
    const std::vector<double> k = matvec(w.wk, x_normed);
    const std::vector<double> v = matvec(w.wv, x_normed);

    Matrix& kc = cache.keys(layer);
    Matrix& vc = cache.values(layer);
    std::copy(k.begin(), k.end(), kc.row(static_cast<std::size_t>(pos)).begin());
    std::copy(v.begin(), v.end(), vc.row(static_cast<std::size_t>(pos)).begin());

    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> ctx(static_cast<std::size_t>(cfg.d_model), 0.0);
    std::vector<double> scores(static_cast<std::size_t>(pos + 1));
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int kvh = h / group;
        const std::size_t qo = static_cast<std::size_t>(h * hd);
        const std::size_t ko = static_cast<std::size_t>(kvh * hd);
        for (int j = 0; j <= pos; ++j) {
            const auto krow = kc.row(static_cast<std::size_t>(j));
            double dot = 0.0;
            for (int d = 0; d < hd; ++d) dot += q[qo + static_cast<std::size_t>(d)] * krow[ko + static_cast<std::size_t>(d)];
            scores[static_cast<std::size_t>(j)] = dot * scale;
        }
        const std::vector<double> probs = softmax(scores);
        for (int j = 0; j <= pos; ++j) {
            const auto vrow = vc.row(static_cast<std::size_t>(j));
            const double p = probs[static_cast<std::size_t>(j)];
            for (int d = 0; d < hd; ++d) ctx[qo + static_cast<std::size_t>(d)] += p * vrow[ko + static_cast<std::size_t>(d)];
        }
    }
    return matvec(w.wo, ctx);
}

// SiLU-gated intermediate for one position, restricted to `channels`
// (ascending). Unlisted channels are left at zero.
void ffn_intermediate_into(const LayerWeights& w, std::span<const double> x_normed,
                           std::span<const int> channels, std::span<double> out) {
    for (int c : channels) {
        const auto ci = static_cast<std::size_t>(c);
        const auto grow = w.gate.row(ci);
        const auto urow = w.up.row(ci);
        double g = 0.0;
        double u = 0.0;
        for (std::size_t k = 0; k < x_normed.size(); ++k) {
            g += grow[k] * x_normed[k];
            u += urow[k] * x_normed[k];
        }
        out[ci] = silu(g) * u;
    }
}

std::vector<double> embed(const Checkpoint& ckpt, int token, int position) {
    const ModelConfig& cfg = ckpt.config;
    if (token < 0 || token >= cfg.vocab) throw std::invalid_argument("token id out of range");
    std::vector<double> x(static_cast<std::size_t>(cfg.d_model));
    const auto t = ckpt.tok_embedding.row(static_cast<std::size_t>(token));
    const auto p = ckpt.pos_embedding.row(static_cast<std::size_t>(position));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = t[i] + p[i];
    return x;
}

std::vector<double> output_logits(const Checkpoint& ckpt, std::span<const double> x) {
    const std::vector<double> h = rms_norm(x, ckpt.final_norm);
    std::vector<double> logits = matvec(ckpt.tok_embedding, h);
    require_finite(logits, "logits");
    return logits;
}

std::vector<int> all_channels(int d_ff) {
    std::vector<int> v(static_cast<std::size_t>(d_ff));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

bool is_sorted_subset(std::span<const int> sub, std::span<const int> super) {
    std::size_t j = 0;
    for (int s : sub) {
        while (j < super.size() && super[j] < s) ++j;
        if (j == super.size() || super[j] != s) return false;
        ++j;
    }
    return true;
}

}  // namespace

ForwardResult prefill(const Checkpoint& ckpt, std::span<const int> tokens,
                      FfnController& policy, KvCache& cache) {
    const ModelConfig& cfg = ckpt.config;
    const int n = static_cast<int>(tokens.size());
    if (n == 0) throw std::invalid_argument("prefill: empty prompt");
    if (cache.length() + n > cache.capacity())
        throw std::invalid_argument("prefill: prompt exceeds max_seq");

    const int base_pos = cache.length();
    Matrix x(static_cast<std::size_t>(n), static_cast<std::size_t>(cfg.d_model));
    for (int p = 0; p < n; ++p) {
        const std::vector<double> e = embed(ckpt, tokens[static_cast<std::size_t>(p)], base_pos + p);
        std::copy(e.begin(), e.end(), x.row(static_cast<std::size_t>(p)).begin());
    }

    ForwardResult res;
    res.taps.reserve(static_cast<std::size_t>(cfg.n_layers));
    res.active.reserve(static_cast<std::size_t>(cfg.n_layers));
    const std::vector<int> full = all_channels(cfg.d_ff);

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const LayerWeights& w = ckpt.layers[static_cast<std::size_t>(layer)];
        // Attention phase: positions processed in order with the same
        // single-position kernel decode uses.
        for (int p = 0; p < n; ++p) {
            auto row = x.row(static_cast<std::size_t>(p));
            const std::vector<double> normed = rms_norm(row, w.attn_norm);
            const std::vector<double> attn = attend_one(ckpt, layer, cache, normed, base_pos + p);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += attn[i];
        }
        // FFN phase over the whole sequence: full-width tap, then the policy's
        // channel set restricts the down projection for every position.
        FfnTap tap;
        tap.layer = layer;
        tap.intermediate = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(cfg.d_ff));
        Matrix normed(static_cast<std::size_t>(n), static_cast<std::size_t>(cfg.d_model));
        for (int p = 0; p < n; ++p) {
            const std::vector<double> nr = rms_norm(x.row(static_cast<std::size_t>(p)), w.ffn_norm);
            std::copy(nr.begin(), nr.end(), normed.row(static_cast<std::size_t>(p)).begin());
            ffn_intermediate_into(w, normed.row(static_cast<std::size_t>(p)), full,
                                  tap.intermediate.row(static_cast<std::size_t>(p)));
        }
        std::vector<int> active = policy.prefill_active(layer, tap);
        for (int p = 0; p < n; ++p) {
            const std::vector<double> out =
                masked_matvec(w.down, tap.intermediate.row(static_cast<std::size_t>(p)), active);
            auto row = x.row(static_cast<std::size_t>(p));
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += out[i];
        }
        res.taps.push_back(std::move(tap));
        res.active.push_back(std::move(active));
        res.phase1_sizes.push_back(cfg.d_ff);
    }

    cache.advance_to(base_pos + n);
    res.logits = output_logits(ckpt, x.row(static_cast<std::size_t>(n - 1)));
    return res;
}

ForwardResult decode_step(const Checkpoint& ckpt, KvCache& cache, int token,
                          FfnController& policy) {
    const ModelConfig& cfg = ckpt.config;
    if (cache.length() >= cache.capacity())
        throw std::invalid_argument("decode_step: KV cache full");

    std::vector<double> x = embed(ckpt, token, cache.length());
    ForwardResult res;
    res.taps.reserve(static_cast<std::size_t>(cfg.n_layers));

    const int pos = cache.length();
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const LayerWeights& w = ckpt.layers[static_cast<std::size_t>(layer)];
        const std::vector<double> attn_in = rms_norm(x, w.attn_norm);
        const std::vector<double> attn = attend_one(ckpt, layer, cache, attn_in, pos);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn[i];

        const std::vector<double> ffn_in = rms_norm(x, w.ffn_norm);
        const std::span<const int> phase1 = policy.decode_phase1(layer);
        FfnTap tap;
        tap.layer = layer;
        tap.intermediate = Matrix(1, static_cast<std::size_t>(cfg.d_ff));
        ffn_intermediate_into(w, ffn_in, phase1, tap.intermediate.row(0));

        std::vector<int> active = policy.decode_phase2(layer, tap);
        if (!is_sorted_subset(active, phase1))
            throw std::invalid_argument("decode_step: phase-2 set not a subset of phase 1");
        const std::vector<double> out = masked_matvec(w.down, tap.intermediate.row(0), active);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += out[i];

        res.phase1_sizes.push_back(static_cast<int>(phase1.size()));
        res.taps.push_back(std::move(tap));
        res.active.push_back(std::move(active));
    }
    cache.advance();
    res.logits = output_logits(ckpt, x);
    return res;
}

namespace {

int argmax_lowest(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

}  // namespace

GenerationResult generate(const Checkpoint& ckpt, std::span<const int> prompt,
                          int n_tokens, FfnController& policy,
                          const GenerateOptions& options) {
    const ModelConfig& cfg = ckpt.config;
    if (n_tokens < 1) throw std::invalid_argument("generate: n_tokens must be >= 1");
    if (prompt.size() < 2)
        throw std::invalid_argument("generate: prompt must have at least 2 tokens");
    if (static_cast<int>(prompt.size()) - 1 + n_tokens > cfg.max_seq)
        throw std::invalid_argument("generate: prompt + n_tokens exceeds max_seq");

    GenerationResult res;
    res.prompt.assign(prompt.begin(), prompt.end());

    KvCache cache(cfg);
    ForwardResult pre = prefill(ckpt, prompt.subspan(0, prompt.size() - 1), policy, cache);
    res.prefill_active = std::move(pre.active);
    if (options.record_taps) {
        for (auto& tap : pre.taps) res.prefill_taps.push_back(std::move(tap.intermediate));
    }

    int current = prompt.back();
    for (int t = 0; t < n_tokens; ++t) {
        ForwardResult step = decode_step(ckpt, cache, current, policy);
        StepRecord rec;
        rec.token = argmax_lowest(step.logits);
        if (options.record_logits) rec.logits = std::move(step.logits);
        rec.active = std::move(step.active);
        rec.phase1_sizes = std::move(step.phase1_sizes);
        for (int layer = 0; layer < cfg.n_layers; ++layer)
            rec.digests.push_back(policy.last_step_digest(layer));
        if (options.record_taps) {
            for (auto& tap : step.taps) rec.taps.push_back(std::move(tap.intermediate.data()));
        }
        res.generated.push_back(rec.token);
        current = rec.token;
        res.steps.push_back(std::move(rec));
    }
    return res;
}

}  // namespace prunesim
