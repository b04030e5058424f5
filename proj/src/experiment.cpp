#include "prunesim/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "prunesim/rng.hpp"

namespace prunesim {

namespace {

const std::set<std::string> kEmitKeys = {"trace", "partition", "flops", "fidelity",
                                         "rank_dynamics"};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_kv_heads = j.at("n_kv_heads").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
}

nlohmann::ordered_json model_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["d_model"] = c.d_model;
    j["d_ff"] = c.d_ff;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["n_kv_heads"] = c.n_kv_heads;
    j["vocab"] = c.vocab;
    j["max_seq"] = c.max_seq;
    j["seed"] = c.seed;
    return j;
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::invalid_argument("cannot open for writing: " + tmp.string());
        os << contents;
        if (!os) throw std::invalid_argument("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"] != kSpecFormat)
        throw std::invalid_argument("spec version mismatch (want prunesim-spec-v1)");
    ExperimentSpec spec;
    const auto& jm = j.at("model");
    if (jm.contains("checkpoint")) {
        spec.checkpoint_path = jm.at("checkpoint").get<std::string>();
    } else {
        spec.model = model_from_json(jm);
    }
    const auto& jp = j.at("pruning");
    spec.pruning.mode = parse_prune_mode(jp.at("mode").get<std::string>());
    spec.pruning.target_pr = jp.value("target_pr", 0.0);
    spec.pruning.gamma = jp.value("gamma", 0.0);
    spec.pruning.random_seed = jp.value("random_seed", std::uint64_t{0});
    const auto& jq = j.at("prompt");
    if (jq.contains("tokens")) {
        spec.prompt.tokens = jq.at("tokens").get<std::vector<int>>();
    } else {
        spec.prompt.seed = jq.at("seed").get<std::uint64_t>();
        spec.prompt.length = jq.at("length").get<int>();
    }
    spec.n_generate = j.at("n_generate").get<int>();
    spec.out_dir = j.value("out_dir", std::string("out"));
    if (j.contains("emit")) {
        for (const auto& e : j.at("emit")) {
            const std::string key = e.get<std::string>();
            if (!kEmitKeys.count(key))
                throw std::invalid_argument("unknown emit key: " + key);
            spec.emit.insert(key);
        }
    }
    return spec;
}

ExperimentSpec ExperimentSpec::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open spec file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("spec file is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

nlohmann::ordered_json ExperimentSpec::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = kSpecFormat;
    if (!checkpoint_path.empty()) {
        j["model"] = nlohmann::ordered_json{{"checkpoint", checkpoint_path}};
    } else {
        j["model"] = model_to_json(model);
    }
    j["pruning"] = {{"mode", to_string(pruning.mode)},
                    {"target_pr", pruning.target_pr},
                    {"gamma", pruning.gamma},
                    {"random_seed", pruning.random_seed}};
    if (prompt.is_explicit()) {
        j["prompt"] = nlohmann::ordered_json{{"tokens", prompt.tokens}};
    } else {
        j["prompt"] = nlohmann::ordered_json{{"seed", prompt.seed}, {"length", prompt.length}};
    }
    j["n_generate"] = n_generate;
    j["out_dir"] = out_dir;
    j["emit"] = std::vector<std::string>(emit.begin(), emit.end());
    return j;
}

void ExperimentSpec::validate() const {
    if (checkpoint_path.empty()) model.validate();
    pruning.validate();
    if (n_generate < 1) throw std::invalid_argument("spec: n_generate must be >= 1");
    const int plen = prompt.is_explicit() ? static_cast<int>(prompt.tokens.size())
                                          : prompt.length;
    if (plen < 2) throw std::invalid_argument("spec: prompt must have at least 2 tokens");
    if (checkpoint_path.empty() && plen + n_generate > model.max_seq)
        throw std::invalid_argument("spec: prompt length + n_generate exceeds max_seq");
}

std::vector<int> resolve_prompt(const PromptSpec& prompt, int vocab) {
    if (prompt.is_explicit()) {
        for (int t : prompt.tokens) {
            if (t < 0 || t >= vocab)
                throw std::invalid_argument("prompt token out of vocab range");
        }
        return prompt.tokens;
    }
    if (prompt.length < 2)
        throw std::invalid_argument("synthetic prompt length must be >= 2");
    Rng rng(prompt.seed);
    std::vector<int> tokens(static_cast<std::size_t>(prompt.length));
    for (int& t : tokens) t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab)));
    return tokens;
}

namespace {

// Synthetic descending scores; partition sizes depend only on (r, gamma, d_ff).
Partition accounting_partition(const PruningConfig& cfg, int d_ff) {
    ChannelScores scores;
    scores.layer = 0;
    scores.step = ChannelScores::kPrefillStep;
    scores.values.resize(static_cast<std::size_t>(d_ff));
    for (int i = 0; i < d_ff; ++i)
        scores.values[static_cast<std::size_t>(i)] = static_cast<double>(d_ff - i);
    return build_partition(scores, cfg, d_ff);
}

RunArtifacts run_with_checkpoint(const ExperimentSpec& spec, const Checkpoint& ckpt) {
    const ModelConfig& cfg = ckpt.config;
    const std::vector<int> prompt = resolve_prompt(spec.prompt, cfg.vocab);
    if (static_cast<int>(prompt.size()) + spec.n_generate > cfg.max_seq)
        throw std::invalid_argument("prompt length + n_generate exceeds max_seq");

    const bool want_dynamics = spec.emit.count("rank_dynamics") > 0;
    GenerateOptions dense_opts;
    dense_opts.record_taps = want_dynamics;

    RunArtifacts art;
    DenseController dense_ctrl(ckpt);
    art.dense = generate(ckpt, prompt, spec.n_generate, dense_ctrl, dense_opts);

    std::unique_ptr<FfnController> ctrl = make_controller(spec.pruning, ckpt);
    art.method = generate(ckpt, prompt, spec.n_generate, *ctrl);

    art.fidelity = fidelity(art.dense, art.method);

    PruningConfig accounting_cfg = spec.pruning;
    if (spec.pruning.mode == PruneMode::kDense) {
        accounting_cfg.target_pr = 0.0;
        accounting_cfg.gamma = 0.0;
    }
    art.accounting_partition = accounting_partition(accounting_cfg, cfg.d_ff);
    art.flops = ffn_flops(cfg, spec.pruning.mode, art.accounting_partition, spec.n_generate);

    if (auto* pop = dynamic_cast<PopController*>(ctrl.get())) {
        for (int l = 0; l < cfg.n_layers; ++l) art.pop_partitions.push_back(pop->partition(l));
    }

    if (want_dynamics) {
        for (int l = 0; l < cfg.n_layers; ++l) {
            const auto li = static_cast<std::size_t>(l);
            const DownColumnNorms norms = down_column_norms(ckpt.layers[li].down, l);
            FfnTap pre_tap;
            pre_tap.layer = l;
            pre_tap.intermediate = art.dense.prefill_taps[li];
            const ChannelScores pre = channel_importance(pre_tap, norms);
            art.prefill_scores.push_back(pre.values);

            std::vector<std::vector<double>> series;
            series.reserve(art.dense.steps.size());
            for (const StepRecord& step : art.dense.steps) {
                std::vector<double> s(step.taps[li].size());
                for (std::size_t i = 0; i < s.size(); ++i)
                    s[i] = std::abs(step.taps[li][i]) * norms.norms[i];
                series.push_back(std::move(s));
            }
            art.dynamics.push_back(rank_dynamics(pre.values, series, l));
        }
    }
    return art;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const Checkpoint ckpt = spec.checkpoint_path.empty()
                                ? init_checkpoint(spec.model)
                                : load_checkpoint(spec.checkpoint_path);
    return run_with_checkpoint(spec, ckpt);
}

std::vector<std::filesystem::path> write_outputs(const ExperimentSpec& spec,
                                                 const RunArtifacts& art) {
    std::filesystem::create_directories(spec.out_dir);
    std::vector<std::filesystem::path> written;
    const bool emit_fidelity = spec.emit.count("fidelity") > 0;
    const bool emit_dynamics = spec.emit.count("rank_dynamics") > 0;
    const int budget = art.accounting_partition.budget;

    if (spec.emit.count("trace")) {
        std::string csv = "step,layer,active_count,budget,token,kl,top1_agree,mean_rank_diff,"
                          "top_half_overlap\n";
        for (std::size_t t = 0; t < art.method.steps.size(); ++t) {
            const StepRecord& step = art.method.steps[t];
            for (std::size_t l = 0; l < step.active.size(); ++l) {
                const int active_count = static_cast<int>(step.active[l].size());
                if (active_count != budget)
                    throw std::logic_error("trace: active-set size differs from budget");
                csv += std::to_string(t) + ',' + std::to_string(l) + ',' +
                       std::to_string(active_count) + ',' + std::to_string(budget) + ',' +
                       std::to_string(step.token) + ',';
                if (emit_fidelity) {
                    csv += fmt_double(art.fidelity.step_kl[t]) + ',';
                    csv += (art.dense.steps[t].token == step.token) ? "1," : "0,";
                } else {
                    csv += ",,";
                }
                if (emit_dynamics) {
                    csv += fmt_double(art.dynamics[l].mean_rank_diff[t]) + ',' +
                           fmt_double(art.dynamics[l].top_half_overlap[t]);
                } else {
                    csv += ",";
                }
                csv += '\n';
            }
        }
        const std::filesystem::path path = std::filesystem::path(spec.out_dir) / "trace.csv";
        atomic_write(path, csv);
        written.push_back(path);
    }

    nlohmann::ordered_json m;
    m["version"] = kSpecFormat;
    m["mode"] = to_string(spec.pruning.mode);
    // The echo omits out_dir: identical experiments give identical bytes no
    // matter where they are written.
    nlohmann::ordered_json spec_echo = spec.to_json();
    spec_echo.erase("out_dir");
    m["spec"] = spec_echo;
    m["budget"] = budget;
    m["tokens"] = {{"dense", art.dense.generated}, {"method", art.method.generated}};
    if (spec.emit.count("flops")) {
        m["flops"] = {{"dense_ffn_macs", art.flops.dense_ffn_macs},
                      {"ideal_pruned_ffn_macs", art.flops.ideal_pruned_ffn_macs},
                      {"method_ffn_macs", art.flops.method_ffn_macs},
                      {"overhead_pct", art.flops.overhead_pct}};
    }
    if (emit_fidelity) {
        m["fidelity"] = {{"mean_kl", art.fidelity.mean_kl},
                         {"top1_agreement", art.fidelity.top1_agreement}};
    }
    if (spec.emit.count("partition")) {
        nlohmann::ordered_json parts = nlohmann::ordered_json::array();
        for (const Partition& p : art.pop_partitions) {
            parts.push_back({{"layer", p.layer},
                             {"retained", p.retained},
                             {"candidate", p.candidate},
                             {"pruned", p.pruned},
                             {"budget", p.budget}});
        }
        m["partitions"] = parts;
        nlohmann::ordered_json prefill = nlohmann::ordered_json::array();
        for (const auto& a : art.method.prefill_active) prefill.push_back(a);
        m["prefill_active"] = prefill;
        nlohmann::ordered_json steps = nlohmann::ordered_json::array();
        for (const StepRecord& step : art.method.steps) {
            nlohmann::ordered_json layers = nlohmann::ordered_json::array();
            for (const auto& a : step.active) layers.push_back(a);
            steps.push_back(layers);
        }
        m["step_active_sets"] = steps;
    }
    if (emit_dynamics) {
        nlohmann::ordered_json dyn = nlohmann::ordered_json::array();
        for (const RankDynamics& d : art.dynamics) {
            dyn.push_back({{"layer", d.layer},
                           {"mean_rank_diff", d.mean_rank_diff},
                           {"top_half_overlap", d.top_half_overlap}});
        }
        m["rank_dynamics"] = dyn;
    }
    const std::filesystem::path mpath = std::filesystem::path(spec.out_dir) / "metrics.json";
    atomic_write(mpath, m.dump(2) + "\n");
    written.push_back(mpath);
    return written;
}

int sweep_threads(int jobs) {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    if (const char* env = std::getenv("PRUNESIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) cap = static_cast<int>(v);
    }
    return std::min(cap, std::max(jobs, 1));
}

namespace {

SummaryRow summarize(const ExperimentSpec& spec, const RunArtifacts& art) {
    SummaryRow row;
    row.target_pr = spec.pruning.target_pr;
    row.gamma = spec.pruning.gamma;
    row.mode = to_string(spec.pruning.mode);
    row.mean_kl = art.fidelity.mean_kl;
    row.top1_agreement = art.fidelity.top1_agreement;
    row.overhead_pct = art.flops.overhead_pct;
    row.method_ffn_macs = art.flops.method_ffn_macs;
    row.ideal_pruned_ffn_macs = art.flops.ideal_pruned_ffn_macs;
    row.dense_ffn_macs = art.flops.dense_ffn_macs;
    return row;
}

std::vector<SummaryRow> run_jobs(const ExperimentSpec& base,
                                 const std::vector<ExperimentSpec>& jobs) {
    base.validate();
    const Checkpoint ckpt = base.checkpoint_path.empty()
                                ? init_checkpoint(base.model)
                                : load_checkpoint(base.checkpoint_path);
    std::vector<SummaryRow> rows(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    const int n_threads = sweep_threads(static_cast<int>(jobs.size()));

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                jobs[i].validate();
                rows[i] = summarize(jobs[i], run_with_checkpoint(jobs[i], ckpt));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
    return rows;
}

}  // namespace

std::vector<SummaryRow> run_sweep(const ExperimentSpec& base,
                                  const std::vector<std::pair<double, double>>& pairs) {
    std::vector<ExperimentSpec> jobs;
    jobs.reserve(pairs.size());
    for (const auto& [r, gamma] : pairs) {
        ExperimentSpec spec = base;
        spec.pruning.target_pr = r;
        spec.pruning.gamma = gamma;
        jobs.push_back(std::move(spec));
    }
    return run_jobs(base, jobs);
}

std::vector<SummaryRow> run_compare(const ExperimentSpec& base,
                                    const std::vector<std::string>& modes) {
    std::vector<ExperimentSpec> jobs;
    jobs.reserve(modes.size());
    for (const std::string& mode : modes) {
        ExperimentSpec spec = base;
        spec.pruning.mode = parse_prune_mode(mode);
        jobs.push_back(std::move(spec));
    }
    return run_jobs(base, jobs);
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    std::string csv = "target_pr,gamma,mode,mean_kl,top1_agreement,overhead_pct,"
                      "method_ffn_macs,ideal_pruned_ffn_macs,dense_ffn_macs\n";
    for (const SummaryRow& row : rows) {
        csv += fmt_double(row.target_pr) + ',' + fmt_double(row.gamma) + ',' + row.mode + ',' +
               fmt_double(row.mean_kl) + ',' + fmt_double(row.top1_agreement) + ',' +
               fmt_double(row.overhead_pct) + ',' + std::to_string(row.method_ffn_macs) + ',' +
               std::to_string(row.ideal_pruned_ffn_macs) + ',' +
               std::to_string(row.dense_ffn_macs) + '\n';
    }
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    atomic_write(path, csv);
}

}  // namespace prunesim
