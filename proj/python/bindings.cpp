#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prunesim/checkpoint.hpp"
#include "prunesim/experiment.hpp"
#include "prunesim/metrics.hpp"
#include "prunesim/presets.hpp"

namespace py = pybind11;
using namespace prunesim;

namespace {

PruningConfig make_pruning(const std::string& mode, double r, double gamma,
                           std::uint64_t random_seed) {
    PruningConfig cfg;
    cfg.mode = parse_prune_mode(mode);
    cfg.target_pr = r;
    cfg.gamma = gamma;
    cfg.random_seed = random_seed;
    cfg.validate();
    return cfg;
}

ChannelScores scores_from(std::vector<double> values, int step) {
    ChannelScores s;
    s.values = std::move(values);
    s.step = step;
    return s;
}

py::dict flops_dict(const FlopsReport& rep) {
    py::dict d;
    d["dense_ffn_macs"] = rep.dense_ffn_macs;
    d["ideal_pruned_ffn_macs"] = rep.ideal_pruned_ffn_macs;
    d["method_ffn_macs"] = rep.method_ffn_macs;
    d["overhead_pct"] = rep.overhead_pct;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Partition-guided online FFN-channel pruning simulator";

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("d_ff", &ModelConfig::d_ff)
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("n_kv_heads", &ModelConfig::n_kv_heads)
        .def_readwrite("vocab", &ModelConfig::vocab)
        .def_readwrite("max_seq", &ModelConfig::max_seq)
        .def_readwrite("seed", &ModelConfig::seed)
        .def("validate", &ModelConfig::validate);

    py::class_<AttnDims>(m, "AttnDims")
        .def(py::init([](int d_model, int d_ff, int n_heads, int n_kv_heads, int head_dim) {
                 AttnDims d;
                 d.d_model = d_model;
                 d.d_ff = d_ff;
                 d.n_heads = n_heads;
                 d.n_kv_heads = n_kv_heads;
                 d.head_dim = head_dim;
                 return d;
             }),
             py::arg("d_model"), py::arg("d_ff"), py::arg("n_heads"), py::arg("n_kv_heads"),
             py::arg("head_dim"));

    py::class_<Partition>(m, "Partition")
        .def_readonly("layer", &Partition::layer)
        .def_readonly("retained", &Partition::retained)
        .def_readonly("candidate", &Partition::candidate)
        .def_readonly("pruned", &Partition::pruned)
        .def_readonly("budget", &Partition::budget);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("config", [](const Checkpoint& c) { return c.config; });

    m.def("init_checkpoint", &init_checkpoint, py::arg("config"));
    m.def("save_checkpoint",
          [](const Checkpoint& ckpt, const std::string& path) { save_checkpoint(ckpt, path); },
          py::arg("checkpoint"), py::arg("path"));
    m.def("load_checkpoint",
          [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"));

    m.def("presets", []() {
        std::vector<std::string> names;
        for (const ModelPreset& p : model_presets()) names.push_back(p.name);
        return names;
    });
    m.def("ffn_pruning_ratio",
          [](double target_pr, const AttnDims& dims) { return ffn_pruning_ratio(target_pr, dims); },
          py::arg("target_pr"), py::arg("dims"));
    m.def("ffn_pruning_ratio",
          [](double target_pr, const std::string& preset) {
              return ffn_pruning_ratio(target_pr, preset_dims(preset));
          },
          py::arg("target_pr"), py::arg("preset"));

    m.def("build_partition",
          [](std::vector<double> prefill_scores, double r, double gamma) {
              const int d_ff = static_cast<int>(prefill_scores.size());
              PruningConfig cfg = make_pruning("pop", r, gamma, 0);
              return build_partition(
                  scores_from(std::move(prefill_scores), ChannelScores::kPrefillStep), cfg, d_ff);
          },
          py::arg("prefill_scores"), py::arg("r"), py::arg("gamma"));
    m.def("select_step_active",
          [](const Partition& part, std::vector<double> step_scores) {
              return select_step_active(part, scores_from(std::move(step_scores), 0));
          },
          py::arg("partition"), py::arg("step_scores"));
    m.def("channel_importance",
          [](const std::vector<std::vector<double>>& tap_rows, std::vector<double> norms) {
              if (tap_rows.empty()) throw std::invalid_argument("empty tap");
              FfnTap tap;
              tap.intermediate = Matrix(tap_rows.size(), tap_rows[0].size());
              for (std::size_t t = 0; t < tap_rows.size(); ++t) {
                  if (tap_rows[t].size() != tap_rows[0].size())
                      throw std::invalid_argument("ragged tap rows");
                  std::copy(tap_rows[t].begin(), tap_rows[t].end(),
                            tap.intermediate.row(t).begin());
              }
              DownColumnNorms n;
              n.norms = std::move(norms);
              return channel_importance(tap, n).values;
          },
          py::arg("tap_rows"), py::arg("norms"));

    m.def("rank_dynamics",
          [](std::vector<double> prefill_scores,
             const std::vector<std::vector<double>>& step_scores_series) {
              const RankDynamics dyn = rank_dynamics(prefill_scores, step_scores_series);
              py::dict d;
              d["mean_rank_diff"] = dyn.mean_rank_diff;
              d["top_half_overlap"] = dyn.top_half_overlap;
              return d;
          },
          py::arg("prefill_scores"), py::arg("step_scores_series"));

    m.def("ffn_flops",
          [](const ModelConfig& config, const std::string& mode, double r, double gamma,
             int n_steps) {
              ChannelScores scores;
              scores.step = ChannelScores::kPrefillStep;
              scores.values.resize(static_cast<std::size_t>(config.d_ff));
              for (int i = 0; i < config.d_ff; ++i)
                  scores.values[static_cast<std::size_t>(i)] = static_cast<double>(config.d_ff - i);
              PruningConfig cfg = make_pruning(mode == "dense" ? "pop" : mode, r, gamma, 0);
              const Partition part = build_partition(scores, cfg, config.d_ff);
              return flops_dict(ffn_flops(config, parse_prune_mode(mode), part, n_steps));
          },
          py::arg("config"), py::arg("mode"), py::arg("r"), py::arg("gamma"), py::arg("n_steps"));

    m.def("generate",
          [](const Checkpoint& ckpt, std::vector<int> prompt, int n_tokens,
             const std::string& mode, double r, double gamma, std::uint64_t random_seed,
             bool record_logits) {
              const PruningConfig cfg = make_pruning(mode, r, gamma, random_seed);
              std::unique_ptr<FfnController> ctrl = make_controller(cfg, ckpt);
              GenerateOptions opts;
              opts.record_logits = record_logits;
              const GenerationResult res = generate(ckpt, prompt, n_tokens, *ctrl, opts);
              py::dict d;
              d["tokens"] = res.generated;
              d["prefill_active"] = res.prefill_active;
              std::vector<std::vector<int>> sizes;
              for (const StepRecord& s : res.steps) {
                  std::vector<int> layer_sizes;
                  for (const auto& a : s.active) layer_sizes.push_back(static_cast<int>(a.size()));
                  sizes.push_back(std::move(layer_sizes));
              }
              d["active_sizes"] = sizes;
              if (record_logits) {
                  std::vector<std::vector<double>> logits;
                  for (const StepRecord& s : res.steps) logits.push_back(s.logits);
                  d["logits"] = logits;
              }
              return d;
          },
          py::arg("checkpoint"), py::arg("prompt"), py::arg("n_tokens"), py::arg("mode") = "dense",
          py::arg("r") = 0.0, py::arg("gamma") = 0.0, py::arg("random_seed") = 0,
          py::arg("record_logits") = true);

    m.def("run_spec",
          [](const std::string& spec_json, const std::string& out_dir) {
              ExperimentSpec spec = ExperimentSpec::from_json(nlohmann::json::parse(spec_json));
              if (!out_dir.empty()) spec.out_dir = out_dir;
              spec.validate();
              const RunArtifacts art = run_experiment(spec);
              std::vector<std::string> written;
              if (!out_dir.empty()) {
                  for (const auto& p : write_outputs(spec, art)) written.push_back(p.string());
              }
              py::dict d;
              d["tokens_dense"] = art.dense.generated;
              d["tokens_method"] = art.method.generated;
              d["mean_kl"] = art.fidelity.mean_kl;
              d["top1_agreement"] = art.fidelity.top1_agreement;
              d["flops"] = flops_dict(art.flops);
              d["written"] = written;
              return d;
          },
          py::arg("spec_json"), py::arg("out_dir") = std::string());

    m.attr("CHECKPOINT_FORMAT") = kCheckpointFormat;
    m.attr("SPEC_FORMAT") = kSpecFormat;
    m.attr("__version__") = "0.1.0";
}
