#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input, invalid configuration, missing files.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical quantity became non-finite. `where` is the epoch (training)
/// or the integration step (dynamics).
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t where)
        : Error(what), where_(where) {}
    std::size_t where() const noexcept { return where_; }

private:
    std::size_t where_;
};

/// Evaluation data overlaps with data used for fitting.
class LeakageError : public Error {
public:
    using Error::Error;
};

} // namespace nest
