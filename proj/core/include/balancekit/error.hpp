#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace balancekit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The network does not satisfy the structural invariants an operation needs.
class InvalidNetwork : public Error {
public:
    using Error::Error;
};

/// A unit cannot be balanced because one side of it carries no cost.
class DegenerateUnit : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. `position` is a byte offset (or row number for
/// line-oriented formats), as documented by the raising parser.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

}  // namespace balancekit
