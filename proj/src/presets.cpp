#include "prunesim/presets.hpp"

namespace prunesim {

const std::vector<ModelPreset>& model_presets() {
    static const std::vector<ModelPreset> presets = {
        {"llama2-7b", {4096, 11008, 32, 32, 128}},
        {"llama2-13b", {5120, 13824, 40, 40, 128}},
        {"llama2-70b", {8192, 28672, 64, 8, 128}},
        {"llama3.1-8b", {4096, 14336, 32, 8, 128}},
        {"llama3.1-70b", {8192, 28672, 64, 8, 128}},
    };
    return presets;
}

AttnDims preset_dims(const std::string& name) {
    for (const ModelPreset& p : model_presets()) {
        if (p.name == name) return p.dims;
    }
    std::string known;
    for (const ModelPreset& p : model_presets()) {
        if (!known.empty()) known += ", ";
        known += p.name;
    }
    throw std::invalid_argument("unknown preset '" + name + "' (known: " + known + ")");
}

}  // namespace prunesim
