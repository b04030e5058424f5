#pragma once

#include <string>
#include <vector>

#include "prunesim/pruning.hpp"

namespace prunesim {

// Prunable-block dimensions for the shipped model presets.
struct ModelPreset {
    std::string name;
    AttnDims dims;
};

const std::vector<ModelPreset>& model_presets();

// Throws std::invalid_argument for unknown names.
AttnDims preset_dims(const std::string& name);

}  // namespace prunesim
