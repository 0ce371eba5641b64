#pragma once

#include <stdexcept>
#include <string>

namespace blv {

/// Base for every error the library throws on bad input or failed numerics.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Argument outside the support of a function or distribution.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A country's time index has a gap or is too short.
class ContiguityError : public Error {
public:
    using Error::Error;
};

/// Dimensions of the inputs do not agree.
class StructuralError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A statistic is undefined for the input (e.g. constant column in a correlation).
class UndefinedStatisticError : public Error {
public:
    using Error::Error;
};

class RankError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Sampler could not start: non-finite log density or gradient at the initial point.
class InitError : public Error {
public:
    using Error::Error;
};

}  // namespace blv
