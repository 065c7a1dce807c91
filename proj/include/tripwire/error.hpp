#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tripwire {

// Invalid argument or configuration; maps to CLI exit code 1.
struct config_error: std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed input file. Carries the 1-based line number when known.
struct parse_error: std::runtime_error {
    parse_error(const std::string& what, std::size_t line = 0):
        std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line(line)
    {}

    std::size_t line;
};

// Non-finite values or a diverged training run; maps to CLI exit code 3.
struct numeric_error: std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tripwire
