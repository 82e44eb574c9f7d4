#pragma once

#include <stdexcept>
#include <string>

namespace nara {

/// Malformed input record or config document.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input parsed but violates a domain invariant (geometry validity, ranges).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes incompatible for an operation.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN or Inf produced during computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace nara
