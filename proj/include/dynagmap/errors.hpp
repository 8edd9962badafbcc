#pragma once

#include <stdexcept>
#include <string>

namespace dynagmap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Backward pass called with state that does not belong to the given inputs.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Every masked pixel was rejected while lifting flow.
class EmptyFlow : public Error {
public:
    using Error::Error;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class OptimizationDiverged : public Error {
public:
    using Error::Error;
};

class SpecValidation : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace dynagmap
