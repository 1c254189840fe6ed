#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace enk {

// Error taxonomy. Each family maps to one failure surface so callers (and the
// CLI exit-code mapping) can tell misuse, bad data, and numeric trouble apart.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape construction/algebra violations (zero extents, mismatched shapes).
struct ShapeError : Error {
    using Error::Error;
};

// Convolution geometry violations (kernel larger than input, bad pool windows).
struct DimsError : Error {
    using Error::Error;
};

// Out-of-range or inconsistent arguments (labels, fractions, negative sigma).
struct ParamError : Error {
    using Error::Error;
};

// Layer-graph construction or execution failures; message names the layer index.
struct GraphError : Error {
    using Error::Error;
};

// Non-finite values produced where the contract requires finite ones.
struct NumericError : Error {
    using Error::Error;
};

// Malformed serialized payloads. Carries the byte offset (or row number for
// text formats) where decoding failed.
struct FormatError : Error {
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (offset " + std::to_string(offset) + ")"), offset(offset) {}
    std::size_t offset = 0;
};

// Filesystem-level failures (missing paths, short writes).
struct FileError : Error {
    using Error::Error;
};

}  // namespace enk
