#pragma once

#include <stdexcept>
#include <string>

namespace cfmimo {

/// Base class for every error raised by the library. `category()` is a short
/// machine-friendly tag used by the CLI when it prints a one-line diagnostic.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain", what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace cfmimo
