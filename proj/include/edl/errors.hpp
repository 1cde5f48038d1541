#pragma once

#include <stdexcept>
#include <string>

namespace edl {

// Error hierarchy; the CLI maps these to its exit codes
// (config 2, io 3, data contract 4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace edl
