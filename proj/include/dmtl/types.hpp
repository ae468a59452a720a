#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dmtl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// One L×r block per edge of the topology, in edge order.
template <typename Scalar>
using EdgeStack = std::vector<Matrix<Scalar>>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace dmtl
