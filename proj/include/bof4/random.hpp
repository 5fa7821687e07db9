#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace bof4 {

// Deterministic Gaussian source. Output position i belongs to chunk i/65536;
// each chunk runs an independent splitmix64 stream derived from (seed, chunk),
// so the sequence is reproducible bit-for-bit regardless of thread count.
// Standard normal pairs come from the Marsaglia polar method.
inline constexpr std::string_view kGaussianSamplerName = "splitmix64-polar";

void fill_gaussian(std::span<float> out, std::uint64_t seed);
void fill_gaussian(std::span<double> out, std::uint64_t seed);

namespace detail {

struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t s) : state(s) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // Uniform in (-1, 1), never exactly 0 at the pair level (rejected below).
    double uniform_pm1() {
        return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0;
    }
};

} // namespace detail

} // namespace bof4
