// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace finerain {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/grid shape disagreements; the message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Caller passed a value outside an operation's contract.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Inconsistent model/layer wiring (channel chains, missing sections, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Fitting a statistical object failed (degenerate channel, too few samples).
class FitError : public Error {
public:
    using Error::Error;
};

// Query against an unfitted or out-of-range table entry.
class LookupError : public Error {
public:
    using Error::Error;
};

// The finite-difference oracle hit a non-finite evaluation.
class OracleError : public Error {
public:
    using Error::Error;
};

// Training produced non-finite losses or gradients.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk container; carries the byte offset of the problem.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

}  // namespace finerain
