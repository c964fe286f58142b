#pragma once

#include <stdexcept>
#include <string>

namespace oslr {

// Structural misuse: bad dimensions, channel mismatch, inconsistent configs.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// On-disk format problems: bad magic, version mismatch, truncation.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf detected, or any other numeric failure. Carries the op name.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace oslr
