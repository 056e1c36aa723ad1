#pragma once

#include <stdexcept>
#include <string>

namespace pgx {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input files or payloads that fail validation.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Shapes or dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace pgx
