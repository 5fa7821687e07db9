#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "bof4/codebook.hpp"

namespace bof4 {

// Published baseline tables (Absolute-mode, 16 levels). NF4's constants match
// the original normal-float release; AF4's match the abnormal-floats release
// (both defined for 64-element blocks and conventionally reused at other
// block sizes).
const std::array<float, 16>& nf4_levels();
const std::array<float, 16>& af4_levels();

// Recognized quantizer names: nf4 | af4 | bof4-mae | bof4-mse | bof4s-mae |
// bof4s-mse.
bool is_builtin_name(std::string_view name);

// Embedded reference tables for the designed families where published values
// exist: the four I=64 variants, plus bof4s-mse at I in {32, 128, 256}.
// Returns nothing when (name, block_size) has no embedded table.
std::optional<Codebook> builtin_fixture(std::string_view name, int block_size);

// Fixture when available, otherwise a theoretical design at this block size
// under a standard-Gaussian weight model.
Codebook resolve_codebook(std::string_view name, int block_size);

// Reference values for validation of the theoretical design path: the
// double-precision MSE-optimal Absolute-mode levels at I=64.
const std::array<double, 16>& reference_theoretical_mse_levels_i64();

} // namespace bof4
