#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace mmpgo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateProjection : std::runtime_error {
  explicit DegenerateProjection(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidParameter : std::runtime_error {
  explicit InvalidParameter(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidPartition : std::runtime_error {
  explicit InvalidPartition(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidGraph : std::runtime_error {
  explicit InvalidGraph(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalFailure : std::runtime_error {
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

struct SingularSubproblem : std::runtime_error {
  explicit SingularSubproblem(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ProtocolViolation : std::runtime_error {
  explicit ProtocolViolation(const std::string& what) : std::runtime_error(what) {}
};

struct MissingReference : std::runtime_error {
  explicit MissingReference(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmpgo
