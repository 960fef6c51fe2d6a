#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace compex {

// Region or pixel coordinate outside the image.
struct BoundsError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Region too small to be split into a partition.
struct DegenerateRegion : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration: dimension mismatch, bad synthetic spec, bad flag values.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Failure on the far side of the classifier boundary (adapter died, protocol violation).
struct GatewayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Failure of one element of a batch; `index` is the position in the caller's batch.
struct BatchItemError : GatewayError {
    BatchItemError(std::size_t i, const std::string& what)
        : GatewayError("batch item " + std::to_string(i) + ": " + what), index(i) {}
    std::size_t index;
};

// Exhaustive search requested over more units than the oracle supports.
struct CapacityError : std::length_error {
    using std::length_error::length_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed occlusion spec or corpus manifest.
struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyCorpus : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UndefinedIou : std::domain_error {
    using std::domain_error::domain_error;
};

}  // namespace compex
