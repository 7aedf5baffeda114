#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdt {

/// Index outside its grid.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Caller violated a documented precondition (shape mismatch, missing history, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input values rejected before any computation (non-finite descriptors, bad config).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The power iteration hit an all-zero contraction.
class DegenerateInputError : public std::runtime_error {
public:
    DegenerateInputError(const std::string& what, std::size_t iteration)
        : std::runtime_error(what), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// An unmasked row or column of an assignment matrix summed to zero.
class DegenerateNormalizationError : public std::runtime_error {
public:
    enum class Axis { Row, Column };
    DegenerateNormalizationError(const std::string& what, std::size_t pair, Axis axis, std::size_t index)
        : std::runtime_error(what), pair_(pair), axis_(axis), index_(index) {}
    std::size_t pair() const noexcept { return pair_; }
    Axis axis() const noexcept { return axis_; }
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t pair_;
    Axis axis_;
    std::size_t index_;
};

/// NaN or Inf produced inside a numeric layer.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Brute-force enumeration refused because the instance is too large.
class SizeGuardError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// A finite-difference probe evaluated to a non-finite value.
class ProbeError : public std::runtime_error {
public:
    ProbeError(const std::string& what, std::size_t coordinate)
        : std::runtime_error(what), coordinate_(coordinate) {}
    std::size_t coordinate() const noexcept { return coordinate_; }

private:
    std::size_t coordinate_;
};

/// Tracker state became inconsistent. Always a bug.
class InternalInvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace mdt
