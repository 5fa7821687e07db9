#include "bof4/random.hpp"

#include <cmath>

#include "bof4/parallel.hpp"

namespace bof4 {

namespace {

constexpr std::size_t kChunk = 1u << 16;

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t chunk) {
    detail::SplitMix64 s(seed);
    std::uint64_t a = s.next();
    return a ^ (chunk * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull);
}

template <class T>
void fill_impl(std::span<T> out, std::uint64_t seed) {
    parallel_chunks(out.size(), kChunk, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        detail::SplitMix64 rng(stream_seed(seed, chunk));
        std::size_t i = b;
        while (i < e) {
            double u, v, s;
            do {
                u = rng.uniform_pm1();
                v = rng.uniform_pm1();
                s = u * u + v * v;
            } while (s >= 1.0 || s == 0.0);
            const double k = std::sqrt(-2.0 * std::log(s) / s);
            out[i++] = static_cast<T>(u * k);
            if (i < e) out[i++] = static_cast<T>(v * k);
        }
    });
}

} // namespace

void fill_gaussian(std::span<float> out, std::uint64_t seed) { fill_impl(out, seed); }
void fill_gaussian(std::span<double> out, std::uint64_t seed) { fill_impl(out, seed); }

} // namespace bof4
