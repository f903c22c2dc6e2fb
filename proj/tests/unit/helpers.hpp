#ifndef BAYESHOM_TEST_HELPERS_HPP
#define BAYESHOM_TEST_HELPERS_HPP

#include <cmath>
#include <random>

#include <bayeshom/common.hpp>

namespace testing {

using bayeshom::Index;
using bayeshom::Matrix;
using bayeshom::Vector;

inline Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline double rel_inf(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

inline double rel_fro(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace testing

#endif
