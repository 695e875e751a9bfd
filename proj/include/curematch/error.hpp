#pragma once

#include <stdexcept>
#include <string>

namespace curematch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file does not match the expected column layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A cell, row or argument violates a data invariant.
class DataError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not produce a finite answer.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Weight vector with no positive entry.
class DegenerateMetricError : public Error {
public:
    DegenerateMetricError() : Error("degenerate metric: all weights are zero") {}
    explicit DegenerateMetricError(const std::string& what) : Error("degenerate metric: " + what) {}
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace curematch
