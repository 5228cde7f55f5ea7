#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gimkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Datasets are stored row-major so a single observation is a contiguous row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowRef = Eigen::Ref<const Vector>;

/// Input file or record does not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numerical routine failed beyond recoverable fallbacks.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gimkit
