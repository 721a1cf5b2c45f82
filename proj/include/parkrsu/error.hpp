#pragma once

#include <stdexcept>
#include <string>

namespace parkrsu {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A coordinate or cell outside the grid.
class BoundsError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A value outside its legal domain (RSSI, strength, weights).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Sampling an RSSI for a beacon that cannot be received.
class NoBeaconError : public Error {
public:
    using Error::Error;
};

/// An attribute is undefined for the given pool (empty maps, zero coverage).
class AttributeError : public Error {
public:
    using Error::Error;
};

/// Non-finite attribute handed to the scoring function.
class ScoringError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace parkrsu
