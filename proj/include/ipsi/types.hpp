#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ipsi {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Array = Eigen::ArrayXd;

template <class T>
using CRef = const Eigen::Ref<const T>;

// Error taxonomy. The CLI maps ValidationError (and its subclasses) to exit
// code 2 and every other ipsi::Error to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class SchemaError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ArgumentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class SingularityError : public NumericError {
public:
    using NumericError::NumericError;
};

class SizeError : public Error {
public:
    using Error::Error;
};

} // namespace ipsi
