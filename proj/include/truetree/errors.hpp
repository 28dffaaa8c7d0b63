#pragma once

#include <stdexcept>
#include <string>

namespace truetree {

// Error taxonomy mirrored by the CLI exit codes:
// input_error -> 1, numerical_error -> 2, resource_error -> 3.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct resource_error : std::runtime_error {
    explicit resource_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace truetree
