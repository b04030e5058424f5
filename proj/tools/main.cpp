#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunesim/checkpoint.hpp"
#include "prunesim/experiment.hpp"
#include "prunesim/presets.hpp"

namespace {

using namespace prunesim;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::pair<double, double>> parse_pairs(const std::string& s) {
    std::vector<std::pair<double, double>> pairs;
    for (const std::string& item : split_csv(s)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("--pairs expects R:GAMMA items, got '" + item + "'");
        pairs.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    }
    if (pairs.empty()) throw std::invalid_argument("--pairs is empty");
    return pairs;
}

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<double> pr;
    std::optional<double> gamma;
    std::optional<std::string> mode;
};

ExperimentSpec load_spec(const std::string& path, const Overrides& ov) {
    ExperimentSpec spec = ExperimentSpec::from_file(path);
    if (ov.out) spec.out_dir = *ov.out;
    if (ov.seed) spec.model.seed = *ov.seed;
    if (ov.pr) spec.pruning.target_pr = *ov.pr;
    if (ov.gamma) spec.pruning.gamma = *ov.gamma;
    if (ov.mode) spec.pruning.mode = parse_prune_mode(*ov.mode);
    spec.validate();
    return spec;
}

int cmd_run(const std::string& spec_path, const Overrides& ov) {
    const ExperimentSpec spec = load_spec(spec_path, ov);
    const RunArtifacts art = run_experiment(spec);
    const auto written = write_outputs(spec, art);
    for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
    std::cout << "mode=" << to_string(spec.pruning.mode)
              << " mean_kl=" << art.fidelity.mean_kl
              << " top1_agreement=" << art.fidelity.top1_agreement
              << " overhead_pct=" << art.flops.overhead_pct << "\n";
    return kExitOk;
}

int cmd_ratio(double pr, const std::string& preset, int d_model, int d_ff, int n_heads,
              int n_kv_heads, int head_dim) {
    AttnDims dims;
    if (!preset.empty()) {
        dims = preset_dims(preset);
    } else {
        if (d_model <= 0 || d_ff <= 0 || n_heads <= 0)
            throw std::invalid_argument("ratio: give --preset or explicit dims");
        dims.d_model = d_model;
        dims.d_ff = d_ff;
        dims.n_heads = n_heads;
        dims.n_kv_heads = n_kv_heads > 0 ? n_kv_heads : n_heads;
        dims.head_dim = head_dim > 0 ? head_dim : d_model / n_heads;
    }
    std::printf("%.3f\n", ffn_pruning_ratio(pr, dims));
    return kExitOk;
}

int cmd_sweep(const std::string& spec_path, const Overrides& ov, const std::string& pairs_arg) {
    const ExperimentSpec spec = load_spec(spec_path, ov);
    const auto pairs = parse_pairs(pairs_arg);
    const auto rows = run_sweep(spec, pairs);
    const auto path = std::filesystem::path(spec.out_dir) / "sweep.csv";
    std::filesystem::create_directories(spec.out_dir);
    write_summary_csv(path, rows);
    std::cout << "wrote " << path.string() << " (" << rows.size() << " rows)\n";
    return kExitOk;
}

int cmd_compare(const std::string& spec_path, const Overrides& ov, const std::string& modes_arg) {
    const ExperimentSpec spec = load_spec(spec_path, ov);
    const std::vector<std::string> modes = split_csv(modes_arg);
    if (modes.empty()) throw std::invalid_argument("--modes is empty");
    const auto rows = run_compare(spec, modes);
    const auto path = std::filesystem::path(spec.out_dir) / "compare.csv";
    std::filesystem::create_directories(spec.out_dir);
    write_summary_csv(path, rows);
    std::cout << "wrote " << path.string() << " (" << rows.size() << " rows)\n";
    return kExitOk;
}

int cmd_ckpt_init(const std::string& spec_path, const std::string& out,
                  std::optional<std::uint64_t> seed) {
    ExperimentSpec spec = ExperimentSpec::from_file(spec_path);
    if (!spec.checkpoint_path.empty())
        throw std::invalid_argument("ckpt init: spec must carry an inline model config");
    if (seed) spec.model.seed = *seed;
    spec.model.validate();
    const Checkpoint ckpt = init_checkpoint(spec.model);
    save_checkpoint(ckpt, out);
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

int cmd_ckpt_info(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const ModelConfig& c = ckpt.config;
    std::printf("format=%s d_model=%d d_ff=%d n_layers=%d n_heads=%d n_kv_heads=%d "
                "vocab=%d max_seq=%d seed=%" PRIu64 "\n",
                kCheckpointFormat, c.d_model, c.d_ff, c.n_layers, c.n_heads, c.n_kv_heads,
                c.vocab, c.max_seq, c.seed);
    return kExitOk;
}

int cmd_ckpt_dump(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    auto stats = [](const char* name, int layer, std::span<const double> v) {
        double mn = v[0], mx = v[0], sum = 0.0;
        for (double x : v) {
            mn = std::min(mn, x);
            mx = std::max(mx, x);
            sum += x;
        }
        if (layer >= 0) std::printf("layer=%d ", layer);
        std::printf("%s n=%zu min=%.6g max=%.6g mean=%.6g\n", name, v.size(), mn, mx,
                    sum / static_cast<double>(v.size()));
    };
    stats("tok_embedding", -1, ckpt.tok_embedding.data());
    stats("pos_embedding", -1, ckpt.pos_embedding.data());
    for (std::size_t l = 0; l < ckpt.layers.size(); ++l) {
        const LayerWeights& w = ckpt.layers[l];
        const int li = static_cast<int>(l);
        stats("wq", li, w.wq.data());
        stats("wk", li, w.wk.data());
        stats("wv", li, w.wv.data());
        stats("wo", li, w.wo.data());
        stats("attn_norm", li, w.attn_norm);
        stats("ffn_norm", li, w.ffn_norm);
        stats("gate", li, w.gate.data());
        stats("up", li, w.up.data());
        stats("down", li, w.down.data());
    }
    stats("final_norm", -1, ckpt.final_norm);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prunesim: partition-guided online FFN-channel pruning simulator"};
    app.require_subcommand(1);

    Overrides ov;
    std::string spec_path;
    std::string pairs_arg;
    std::string modes_arg = "static_prefill,full_reeval,pop,random";
    double pr = 0.0;
    std::string preset;
    int d_model = 0, d_ff = 0, n_heads = 0, n_kv_heads = 0, head_dim = 0;
    std::string ckpt_out, ckpt_path;
    std::optional<std::uint64_t> ckpt_seed;

    auto add_overrides = [&](CLI::App* cmd, bool with_run_overrides) {
        cmd->add_option("--spec", spec_path, "experiment spec JSON (prunesim-spec-v1)")
            ->required();
        cmd->add_option("--out", [&](const CLI::results_t& r) { ov.out = r[0]; return true; },
                        "output directory (overrides spec out_dir)");
        if (with_run_overrides) {
            cmd->add_option("--seed",
                            [&](const CLI::results_t& r) { ov.seed = std::stoull(r[0]); return true; },
                            "model seed override");
            cmd->add_option("--pr", [&](const CLI::results_t& r) { ov.pr = std::stod(r[0]); return true; },
                            "pruning ratio override");
            cmd->add_option("--gamma",
                            [&](const CLI::results_t& r) { ov.gamma = std::stod(r[0]); return true; },
                            "partition fraction override");
            cmd->add_option("--mode", [&](const CLI::results_t& r) { ov.mode = r[0]; return true; },
                            "pruning mode override");
        }
    };

    CLI::App* run = app.add_subcommand("run", "run dense reference + configured mode");
    add_overrides(run, true);

    CLI::App* ratio = app.add_subcommand("ratio", "FFN pruning ratio for a parameter target");
    ratio->add_option("--pr", pr, "whole-model target pruning ratio")->required();
    ratio->add_option("--preset", preset, "model preset name");
    ratio->add_option("--d-model", d_model, "model width");
    ratio->add_option("--d-ff", d_ff, "FFN intermediate width");
    ratio->add_option("--n-heads", n_heads, "attention heads");
    ratio->add_option("--n-kv-heads", n_kv_heads, "KV heads (default: n_heads)");
    ratio->add_option("--head-dim", head_dim, "head dim (default: d_model/n_heads)");

    CLI::App* sweep = app.add_subcommand("sweep", "run a list of (r, gamma) configurations");
    add_overrides(sweep, true);
    sweep->add_option("--pairs", pairs_arg, "comma-separated R:GAMMA pairs")->required();

    CLI::App* compare = app.add_subcommand("compare", "run several modes on one spec");
    add_overrides(compare, true);
    compare->add_option("--modes", modes_arg, "comma-separated mode names");

    CLI::App* ckpt = app.add_subcommand("ckpt", "checkpoint utilities");
    ckpt->require_subcommand(1);
    CLI::App* ckpt_init = ckpt->add_subcommand("init", "write a seeded checkpoint");
    ckpt_init->add_option("--spec", spec_path, "spec with an inline model config")->required();
    ckpt_init->add_option("--out", ckpt_out, "output checkpoint path")->required();
    ckpt_init->add_option("--seed",
                          [&](const CLI::results_t& r) { ckpt_seed = std::stoull(r[0]); return true; },
                          "model seed override");
    CLI::App* ckpt_info = ckpt->add_subcommand("info", "print and validate the header");
    ckpt_info->add_option("--path", ckpt_path, "checkpoint path")->required();
    CLI::App* ckpt_dump = ckpt->add_subcommand("dump", "print per-tensor statistics");
    ckpt_dump->add_option("--path", ckpt_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(spec_path, ov);
        if (ratio->parsed())
            return cmd_ratio(pr, preset, d_model, d_ff, n_heads, n_kv_heads, head_dim);
        if (sweep->parsed()) return cmd_sweep(spec_path, ov, pairs_arg);
        if (compare->parsed()) return cmd_compare(spec_path, ov, modes_arg);
        if (ckpt->parsed()) {
            if (ckpt_init->parsed()) return cmd_ckpt_init(spec_path, ckpt_out, ckpt_seed);
            if (ckpt_info->parsed()) return cmd_ckpt_info(ckpt_path);
            if (ckpt_dump->parsed()) return cmd_ckpt_dump(ckpt_path);
        }
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNonFinite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
