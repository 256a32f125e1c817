#pragma once

#include <stdexcept>
#include <string>

namespace elcr {

// Thrown when an estimator cannot be computed from the given sample
// (no root bracket for the estimating equation, degenerate data, ...).
// Distinct from std::invalid_argument so callers can separate
// "bad request" from "this sample defeats the method".
class estimation_error : public std::runtime_error {
public:
    explicit estimation_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace elcr
