#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prunesim/matrix.hpp"
#include "prunesim/numerics.hpp"

namespace prunesim {

// Toy decoder-only transformer: pre-norm, multi-head attention with a KV
// cache (grouped KV heads), SiLU-gated FFN, learned absolute position
// embeddings, tied output head. d_ff is the pruning target.
struct ModelConfig {
    int d_model = 64;
    int d_ff = 256;
    int n_layers = 4;
    int n_heads = 4;
    int n_kv_heads = 2;
    int vocab = 256;
    int max_seq = 128;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    int kv_dim() const { return n_kv_heads * head_dim(); }

    // Throws std::invalid_argument on divisibility/width violations.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    Matrix wq;                      // d_model x d_model
    Matrix wk;                      // kv_dim x d_model
    Matrix wv;                      // kv_dim x d_model
    Matrix wo;                      // d_model x d_model
    std::vector<double> attn_norm;  // d_model
    std::vector<double> ffn_norm;   // d_model
    Matrix gate;                    // d_ff x d_model
    Matrix up;                      // d_ff x d_model
    Matrix down;                    // d_model x d_ff
};

struct Checkpoint {
    ModelConfig config;
    Matrix tok_embedding;            // vocab x d_model, tied with the output head
    Matrix pos_embedding;            // max_seq x d_model
    std::vector<LayerWeights> layers;
    std::vector<double> final_norm;  // d_model
};

// Deterministic synthetic weights. Projection entries are (2u-1)/sqrt(fan_in)
// with fan_in = input dim, embeddings use scale 1.0, norm gains are 1.0.
// Each tensor gets its own SplitMix64 stream seeded by
// mix(mix(config.seed, layer+1), tensor_kind); elements are drawn row-major.
Checkpoint init_checkpoint(const ModelConfig& config);

// Per-layer key/value rows for positions [0, length).
class KvCache {
public:
    explicit KvCache(const ModelConfig& config);

    int length() const { return length_; }
    int capacity() const { return capacity_; }

    // Appends one position across all layers is done row-by-row by the model;
    // these accessors expose per-layer storage.
    Matrix& keys(int layer) { return keys_[static_cast<std::size_t>(layer)]; }
    Matrix& values(int layer) { return values_[static_cast<std::size_t>(layer)]; }
    const Matrix& keys(int layer) const { return keys_[static_cast<std::size_t>(layer)]; }
    const Matrix& values(int layer) const { return values_[static_cast<std::size_t>(layer)]; }

    void advance();            // length += 1, throws on overflow
    void advance_to(int len);  // prefill bulk append, throws on overflow/rewind

private:
    int length_ = 0;
    int capacity_ = 0;
    std::vector<Matrix> keys_;    // per layer: max_seq x kv_dim
    std::vector<Matrix> values_;  // per layer: max_seq x kv_dim
};

// Post-activation FFN intermediate handed to pruning policies.
// Prefill: one row per prompt position, all d_ff channels.
// Decode: a single row; only phase-1 channels are computed, others are zero.
struct FfnTap {
    int layer = 0;
    Matrix intermediate;  // tokens x d_ff
};

struct ScoreDigest {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    int count = 0;
};

// Per-layer FFN pruning policy consulted by the model.
//
// Prefill sees the full-width tap and returns the channel set used for the
// down projection. Decoding is two-phase: phase 1 names the channels whose
// gate/up activations are computed at all, phase 2 sees the restricted tap
// and returns the final active set, which must be a subset of phase 1.
// All returned sets are sorted ascending.
class FfnController {
public:
    virtual ~FfnController() = default;

    virtual std::vector<int> prefill_active(int layer, const FfnTap& tap) = 0;
    virtual std::span<const int> decode_phase1(int layer) = 0;
    virtual std::vector<int> decode_phase2(int layer, const FfnTap& tap) = 0;

    // Digest of the scores phase 2 ranked this step (count = 0 when the
    // policy does not score anything).
    virtual ScoreDigest last_step_digest(int /*layer*/) const { return {}; }
};

struct ForwardResult {
    std::vector<double> logits;            // vocab, last position
    std::vector<FfnTap> taps;              // per layer
    std::vector<std::vector<int>> active;  // per layer, down-projection set
    std::vector<int> phase1_sizes;         // per layer (decode only; prefill: d_ff)
};

// Causal forward over all prompt tokens; fills the cache, returns
// last-position logits and per-layer full-width taps.
ForwardResult prefill(const Checkpoint& ckpt, std::span<const int> tokens,
                      FfnController& policy, KvCache& cache);

// One autoregressive step for `token` at position cache.length().
ForwardResult decode_step(const Checkpoint& ckpt, KvCache& cache, int token,
                          FfnController& policy);

struct GenerateOptions {
    bool record_taps = false;    // keep per-step (and prefill) taps for diagnostics
    bool record_logits = true;   // keep per-step logits
};

struct StepRecord {
    int token = 0;                          // greedy choice at this step
    std::vector<double> logits;             // vocab (empty if not recorded)
    std::vector<std::vector<int>> active;   // per layer
    std::vector<int> phase1_sizes;          // per layer
    std::vector<ScoreDigest> digests;       // per layer
    std::vector<std::vector<double>> taps;  // per layer, d_ff (empty if not recorded)
};

struct GenerationResult {
    std::vector<int> prompt;
    std::vector<int> generated;
    std::vector<StepRecord> steps;                   // one per generated token
    std::vector<std::vector<int>> prefill_active;    // per layer
    std::vector<Matrix> prefill_taps;                // per layer (empty if not recorded)
};

// Greedy decoding (argmax, ties -> lowest token id). The prompt's final token
// is consumed by the first decode step, so a prompt of length L runs prefill
// over L-1 tokens and exactly n_tokens decode steps. Requires L >= 2 and
// (L-1) + n_tokens <= max_seq.
GenerationResult generate(const Checkpoint& ckpt, std::span<const int> prompt,
                          int n_tokens, FfnController& policy,
                          const GenerateOptions& options = {});

}  // namespace prunesim
