#ifndef BAYESHOM_COMMON_HPP
#define BAYESHOM_COMMON_HPP

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace bayeshom {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// A point of [0,1]^dim. The second coordinate is ignored (and kept at 0) in 1D.
using Point = std::array<double, 2>;

/// Rejected input: bad sizes, out-of-range parameters, inconsistent objects.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization or eigensolve broke down.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical identity that must hold did not.
class VerificationError : public std::runtime_error {
 public:
  VerificationError(std::string invariant, const std::string& what)
      : std::runtime_error(invariant + ": " + what), invariant_(std::move(invariant)) {}
  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace bayeshom

#endif  // BAYESHOM_COMMON_HPP
