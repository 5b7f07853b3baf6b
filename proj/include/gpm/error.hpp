#pragma once

#include <stdexcept>
#include <string>

namespace gpm {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape violations: ragged grids, mismatched dimensions, bad alternation.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A value outside the accepted domain (cell > 9, empty unary argument, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Text that could not be parsed. Carries the offending row/column when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int row = -1, int col = -1)
        : Error(what), row_(row), col_(col) {}

    int row() const noexcept { return row_; }
    int col() const noexcept { return col_; }

private:
    int row_;
    int col_;
};

/// A token that is not in an alphabet's domain or image.
class MappingError : public Error {
public:
    MappingError(const std::string& what, std::string token)
        : Error(what), token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Remote model unreachable after retries, or an HTTP-level failure.
class TransportError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

}  // namespace gpm
