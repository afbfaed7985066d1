#pragma once

#include <stdexcept>
#include <string>

namespace mknn {

// Bad or inconsistent input data (files, labels, dimensions).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical routine failed to meet its contract (singular system,
// failed factorization, residual above tolerance).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mknn
