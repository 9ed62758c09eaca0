#pragma once

#include <stdexcept>
#include <string>

namespace sasvfuse {

/// Category decides the CLI exit code: data problems exit 2, numerical failures exit 3.
enum class ErrorCategory { Data, Numerical };

/// Base of every error thrown by the library. Carries the name of the module
/// that raised it so the CLI can print provenance.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what, ErrorCategory category = ErrorCategory::Data)
        : std::runtime_error(what), module_(std::move(module)), category_(category) {}

    const std::string& module() const noexcept { return module_; }
    ErrorCategory category() const noexcept { return category_; }

private:
    std::string module_;
    ErrorCategory category_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& module, const std::string& what, std::size_t line)
        : Error(module, what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

class TrainError : public Error {
public:
    TrainError(const std::string& module, const std::string& what,
               ErrorCategory category = ErrorCategory::Data)
        : Error(module, what, category) {}
};

class NumericalError : public Error {
public:
    NumericalError(const std::string& module, const std::string& what)
        : Error(module, what, ErrorCategory::Numerical) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sasvfuse
