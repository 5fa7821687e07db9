#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bof4/codebook.hpp"
#include "bof4/quant.hpp"

namespace bof4 {

// Binary container for a quantized tensor (all fields little-endian):
//   "BQT1" | version u8=1 | mode u8 (0 abs, 1 signed) | flags u8 (bit0:
//   outliers) | reserved u8 | block_size u32 | element_count u64 |
//   16 x f32 levels | ceil(N/2) packed code bytes | B x u16 constants |
//   [outlier_count u64 | count x (u64 index, u16 value)]
// Writing is deterministic; reading validates magic, version, and exact size.
std::vector<std::uint8_t> write_quantized(const QuantizedTensor& qt);
QuantizedTensor read_quantized(std::span<const std::uint8_t> bytes);

void write_quantized_file(const std::filesystem::path& path, const QuantizedTensor& qt);
QuantizedTensor read_quantized_file(const std::filesystem::path& path);

// Codebook JSON document:
// {name, num_levels, block_size, mode, metric, objective, constrained,
//  levels, provenance: {method, seed, sample_count, iterations,
//  final_objective}}
// Levels round-trip exactly (shortest representation that recovers the same
// 32-bit value); unknown fields are rejected.
std::string write_codebook_json(const Codebook& cb);
Codebook read_codebook_json(const std::string& text);

void write_codebook_file(const std::filesystem::path& path, const Codebook& cb);
Codebook read_codebook_file(const std::filesystem::path& path);

// Flat little-endian binary32 tensor files.
void write_raw_tensor(const std::filesystem::path& path, std::span<const float> data);
std::vector<float> read_raw_tensor(const std::filesystem::path& path);

} // namespace bof4
