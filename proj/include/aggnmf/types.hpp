#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace aggnmf {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// T x N matrix of time series: rows are periods, columns are individuals.
using SeriesMatrix = Matrix;

/// Base of every error thrown by the library. The CLI maps the concrete
/// subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameter or configuration value.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch between matrices, vectors or schemes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed or non-finite input data.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed (factorization, root bracketing, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string shape_str(Index rows, Index cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string(what) + ": expected shape " + shape_str(rows, cols) +
                             ", got " + shape_str(m.rows(), m.cols()));
    }
}

}  // namespace detail
}  // namespace aggnmf
