#pragma once

#include <stdexcept>
#include <string>

namespace keyflow {

// Malformed or inconsistent on-disk data (datasets, checkpoints, bundles,
// configs). The command-line front end maps this to its own exit code so
// scripts can tell "bad file" from "bad invocation".
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace keyflow
