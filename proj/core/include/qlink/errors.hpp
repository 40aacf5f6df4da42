#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlink {

/// A parameter or state violates a documented invariant. `field` names the
/// offending parameter using the config-file path (e.g. `detectors.snspd.efficiency`)
/// when one is known.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field.empty() ? what : field + ": " + what),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed config or data file. Line and column are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t line, std::size_t column, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                             ": " + what),
          source_(std::move(source)),
          line_(line),
          column_(column) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::string source_;
    std::size_t line_;
    std::size_t column_;
};

/// Data file parsed but does not match the documented CSV schema.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string column, const std::string& what)
        : std::runtime_error(what), column_(std::move(column)) {}

    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

}  // namespace qlink
