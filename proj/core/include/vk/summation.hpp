#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace vk {

/// Pairwise (tree) summation with a fixed split order; the result depends only on the input.
double pairwise_sum(const double* x, std::size_t n);

inline double pairwise_sum(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return pairwise_sum(x.data(), static_cast<std::size_t>(x.size()));
}

}  // namespace vk
