#pragma once

#include <cstdint>
#include <vector>

namespace bof4 {

// Preserved outliers: flat indices into the tensor plus the original values
// in the 16-bit constant format. Indices strictly increasing.
struct OutlierSet {
    std::vector<std::uint64_t> indices;
    std::vector<std::uint16_t> values;
    double q = 0.95; // block-max quantile that defined the threshold
};

} // namespace bof4
