#pragma once

// Central finite-difference gradient verification. The forward callable
// must rebuild its graph from the given leaf tensors on every call.

#include <functional>

#include "epiwarp/tensor.hpp"

namespace epiwarp {

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// rel err = |analytic - fd| / max(|analytic|, |fd|, floor)
inline double grad_rel_err(double analytic, double fd, double floor = 1e-2) {
  return std::abs(analytic - fd) /
         std::max({std::abs(analytic), std::abs(fd), floor});
}

// Checks d(forward)/d(leaf) for every leaf in `leaves`. When
// `probes_per_leaf` > 0, a deterministic stride-sampled subset of the
// coordinates is probed instead of all of them.
inline GradcheckResult gradcheck(
    const std::function<Tensor<double>()>& forward,
    std::vector<Tensor<double>> leaves, double h = 1e-5,
    std::size_t probes_per_leaf = 0) {
  Tensor<double> loss = forward();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.push_back(l.grad());

  GradcheckResult r;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& leaf = leaves[li];
    const std::size_t n = leaf.numel();
    std::size_t stride = 1;
    if (probes_per_leaf > 0 && n > probes_per_leaf)
      stride = (n + probes_per_leaf - 1) / probes_per_leaf;
    for (std::size_t k = 0; k < n; k += stride) {
      const double orig = leaf.data()[k];
      leaf.data()[k] = orig + h;
      const double fp = forward().item();
      leaf.data()[k] = orig - h;
      const double fm = forward().item();
      leaf.data()[k] = orig;
      const double fd = (fp - fm) / (2 * h);
      r.max_rel_err = std::max(r.max_rel_err, grad_rel_err(analytic[li][k], fd));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace epiwarp
