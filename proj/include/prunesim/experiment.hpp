#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunesim/checkpoint.hpp"
#include "prunesim/metrics.hpp"
#include "prunesim/model.hpp"
#include "prunesim/pruning.hpp"

namespace prunesim {

inline constexpr const char* kSpecFormat = "prunesim-spec-v1";

// Prompt: either explicit token ids or (seed, length) for a synthetic prompt
// drawn uniformly from the vocab.
struct PromptSpec {
    std::vector<int> tokens;
    std::uint64_t seed = 0;
    int length = 0;
    bool is_explicit() const { return !tokens.empty(); }
};

struct ExperimentSpec {
    ModelConfig model;
    std::string checkpoint_path;  // when set, overrides `model`
    PruningConfig pruning;
    PromptSpec prompt;
    int n_generate = 1;
    std::string out_dir = "out";
    std::set<std::string> emit;  // subset of {trace, partition, flops, fidelity, rank_dynamics}

    static ExperimentSpec from_json(const nlohmann::json& j);
    static ExperimentSpec from_file(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
    void validate() const;
};

// Resolved prompt tokens for a spec (explicit or synthetic).
std::vector<int> resolve_prompt(const PromptSpec& prompt, int vocab);

struct RunArtifacts {
    GenerationResult dense;
    GenerationResult method;
    FidelityReport fidelity;
    FlopsReport flops;
    Partition accounting_partition;          // sizes match the configured (r, gamma)
    std::vector<Partition> pop_partitions;   // per layer, pop mode only
    std::vector<RankDynamics> dynamics;      // per layer, from the dense run's taps
    std::vector<std::vector<double>> prefill_scores;  // per layer, dense run
};

// Runs the dense reference plus the configured mode on the same prompt.
RunArtifacts run_experiment(const ExperimentSpec& spec);

// trace.csv / metrics.json emission. Deterministic bytes for a given spec;
// files are written atomically (temp file + rename). Returns written paths.
std::vector<std::filesystem::path> write_outputs(const ExperimentSpec& spec,
                                                 const RunArtifacts& artifacts);

// One sweep/compare row: a full experiment summarized.
struct SummaryRow {
    double target_pr = 0.0;
    double gamma = 0.0;
    std::string mode;
    double mean_kl = 0.0;
    double top1_agreement = 0.0;
    double overhead_pct = 0.0;
    std::uint64_t method_ffn_macs = 0;
    std::uint64_t ideal_pruned_ffn_macs = 0;
    std::uint64_t dense_ffn_macs = 0;
};

// Runs one configuration per (r, gamma) pair; rows come back in input order.
// Parallelism is capped by the PRUNESIM_THREADS environment variable.
std::vector<SummaryRow> run_sweep(const ExperimentSpec& base,
                                  const std::vector<std::pair<double, double>>& pairs);

// Runs one configuration per mode name at the spec's (r, gamma).
std::vector<SummaryRow> run_compare(const ExperimentSpec& base,
                                    const std::vector<std::string>& modes);

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

// Effective worker count for `jobs` independent tasks.
int sweep_threads(int jobs);

}  // namespace prunesim
