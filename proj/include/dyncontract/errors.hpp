#pragma once

#include <stdexcept>
#include <string>

namespace dyncontract {

/// Base class; the CLI maps each subclass to an exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

struct ConfigError : Error {
    using Error::Error;
    int exit_code() const override { return 2; }
};

struct DomainError : Error {
    using Error::Error;
    int exit_code() const override { return 2; }
};

struct InfeasibleError : Error {
    using Error::Error;
    int exit_code() const override { return 3; }
};

struct PremiseError : Error {
    using Error::Error;
    int exit_code() const override { return 4; }
};

struct ConvergenceError : Error {
    using Error::Error;
    int exit_code() const override { return 5; }
};

} // namespace dyncontract
