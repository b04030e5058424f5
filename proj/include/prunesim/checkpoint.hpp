#pragma once

#include <filesystem>

#include "prunesim/model.hpp"

namespace prunesim {

inline constexpr const char* kCheckpointFormat = "prunesim-ckpt-v1";

// File layout: one UTF-8 JSON header line (config fields plus
// "format": "prunesim-ckpt-v1") terminated by '\n', followed by raw
// little-endian float64 tensors in this fixed order:
//   tok_embedding, pos_embedding,
//   per layer: wq, wk, wv, wo, attn_norm, ffn_norm, gate, up, down,
//   final_norm.
// Round-trips are byte-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prunesim
