#pragma once

#include <stdexcept>
#include <string>

namespace hedge {

// Bad configuration or malformed input. Maps to CLI exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed to converge or produced non-finite values.
// Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem trouble. Maps to CLI exit code 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace hedge
