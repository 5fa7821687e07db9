#pragma once

#include <stdexcept>
#include <string>

namespace bof4 {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside its mathematical domain (e.g. a probability not in (0,1)).
struct DomainError : Error {
    using Error::Error;
};

// Structurally invalid input: NaN/Inf weights, mismatched lengths, duplicate
// or out-of-range indices.
struct InvalidInputError : Error {
    using Error::Error;
};

// A block that cannot be processed: all-zero where a nonzero constant is
// required, or too short for a sample statistic.
struct DegenerateBlockError : Error {
    using Error::Error;
};

// A partition region with no probability mass / no samples where mass is required.
struct EmptyRegionError : Error {
    using Error::Error;
};

// A level table that violates its structural invariants (unsorted, duplicates,
// wrong count, constraint not present).
struct InvalidCodebookError : Error {
    using Error::Error;
};

// A codebook that cannot be used for the requested operation (wrong level
// count, wrong normalization mode, mismatched block size).
struct IncompatibleCodebookError : Error {
    using Error::Error;
};

// A serialized payload that fails structural validation (truncation, trailing
// bytes, impossible counts).
struct CorruptDataError : Error {
    using Error::Error;
};

// A container with an unknown magic or version.
struct UnsupportedFormatError : Error {
    using Error::Error;
};

// A JSON document that does not match the codebook schema.
struct SchemaError : Error {
    using Error::Error;
};

// Numeric failure: an iteration that did not converge, a NaN objective.
struct NumericError : Error {
    using Error::Error;
};

} // namespace bof4
