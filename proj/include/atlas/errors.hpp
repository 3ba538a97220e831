#pragma once

#include <stdexcept>
#include <string>

namespace atlas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent configuration (bad option value, missing head, tape/net mismatch).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix extents that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; carries the offending line when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

/// Missing or unreadable file.
class IoError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace atlas
