#pragma once

#include <string>

#include "qsearch/vit.hpp"

namespace qsearch {

// Model checkpoint, lossless for config, weights and QuantParams.
//
//   magic "QVIT", format version u32,
//   config block (little-endian u32 integers),
//   section count u32, then named sections:
//     name length u32, name bytes, dtype tag u8 (0 = f32 tensor,
//     1 = quant params), ndim u32, dims u32[], payload.
//   Tensor payload: raw little-endian f32. QuantParams payload:
//     scheme u8, bits u8, delta f32, zero_point i32, alpha i32, beta i32.
//
// Sections are written in a fixed order so saving is byte-deterministic;
// the loader verifies names strictly. Quantized-weight caches are rebuilt
// on load, not stored.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

} // namespace qsearch
