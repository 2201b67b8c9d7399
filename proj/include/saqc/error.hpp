// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace saqc {

enum class Errc {
    InvalidSize,
    EmptyInstance,
    IndexError,
    ParseError,
    CapacityExceeded,
    OracleTooLarge,
    UndefinedForUnsat,
    TooLarge,
    UndefinedTarget,
    IntegrationError,
    DegenerateGround,
    EmptyPopulation,
    FitDomainError,
    InsufficientData,
    TailTooThin,
    NotDecaying,
    TailUnavailable,
    ConfigError,
    ReportError,
    IoError,
};

constexpr std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::InvalidSize: return "InvalidSize";
    case Errc::EmptyInstance: return "EmptyInstance";
    case Errc::IndexError: return "IndexError";
    case Errc::ParseError: return "ParseError";
    case Errc::CapacityExceeded: return "CapacityExceeded";
    case Errc::OracleTooLarge: return "OracleTooLarge";
    case Errc::UndefinedForUnsat: return "UndefinedForUnsat";
    case Errc::TooLarge: return "TooLarge";
    case Errc::UndefinedTarget: return "UndefinedTarget";
    case Errc::IntegrationError: return "IntegrationError";
    case Errc::DegenerateGround: return "DegenerateGround";
    case Errc::EmptyPopulation: return "EmptyPopulation";
    case Errc::FitDomainError: return "FitDomainError";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::TailTooThin: return "TailTooThin";
    case Errc::NotDecaying: return "NotDecaying";
    case Errc::TailUnavailable: return "TailUnavailable";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ReportError: return "ReportError";
    case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Parse failure carrying the 1-based line number of the offending input.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(Errc::ParseError, "line " + std::to_string(line) + ": " + what)
        , line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace saqc
