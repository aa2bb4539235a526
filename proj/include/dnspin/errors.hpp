#pragma once

#include <stdexcept>
#include <string>

namespace dnspin {

/// Base of all library errors. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad argument, out-of-range dimension, rank mismatch.
struct DomainError : Error {
    using Error::Error;
};

/// Config or usage problems (exit 2).
struct ParseError : Error {
    using Error::Error;
};

/// Linear solver or ODE failure (exit 3).
struct SolverError : Error {
    using Error::Error;
};

/// Jets too short for the requested depth.
struct OrderError : Error {
    using Error::Error;
};

}  // namespace dnspin
