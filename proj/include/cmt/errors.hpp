// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cmt {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// config 2, data/checkpoint 3, divergence 4.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

// Raised when a loss or gradient goes non-finite; carries the offending
// component or parameter name in the message.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

// A caller broke a stated usage contract (e.g. backprop through a
// generator that was never frozen).
class ContractViolation : public Error {
public:
    explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

class DegenerateBatch : public Error {
public:
    explicit DegenerateBatch(const std::string& msg) : Error(msg) {}
};

}  // namespace cmt
