#pragma once

#include <stdexcept>
#include <string>

namespace structcox {

/// Malformed or inconsistent user input (data files, grouping files, options).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Arithmetic breakdown: overflow in the likelihood, step-size underflow.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal invariant violated. Indicates a bug rather than bad input.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace structcox
