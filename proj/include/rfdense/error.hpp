#pragma once

#include <stdexcept>
#include <string>

namespace rfdense {

/// Base class for every error raised by the library. `kind()` is the stable
/// machine-readable tag emitted by the CLI error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data_error", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric_error", what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

}  // namespace rfdense
