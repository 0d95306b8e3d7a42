#pragma once

#include <stdexcept>
#include <string>

namespace tdpmm {

/// Base for every error raised by the library. `module()` names the component
/// that failed so the CLI can tag messages and map them to exit codes.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Bad input: malformed files, schema mismatches, invalid parameters.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Internal bookkeeping broke. Always an implementation bug.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

}  // namespace tdpmm
