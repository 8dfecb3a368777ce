#pragma once

#include <stdexcept>
#include <string>

namespace zsl {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed something outside an operation's preconditions.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A table or payload does not match its schema.
class SchemaError : public Error {
public:
    SchemaError(std::string file, std::string column, const std::string& what)
        : Error(what), file_(std::move(file)), column_(std::move(column)) {}

    const std::string& file() const noexcept { return file_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::string file_;
    std::string column_;
};

/// Malformed input data (dates, numbers, JSON artifacts).
class DataError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration, e.g. delta tf-idf without class counts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Model fitting failed; `diagnostics()` carries solver state at the point of failure.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::string diagnostics = {})
        : Error(what), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

} // namespace zsl
