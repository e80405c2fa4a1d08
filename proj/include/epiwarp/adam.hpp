#pragma once

// Adam with bias correction over a ParamStore.

#include <cstddef>

#include "epiwarp/nn.hpp"
#include "epiwarp/tensor.hpp"

namespace epiwarp {

template <class T>
struct AdamState {
  std::size_t step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  T learning_rate = T(1e-4);
  // one slot per parameter, allocated lazily on the first step
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

template <class T>
void adam_step(AdamState<T>& state, ParamStore<T>& params) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.params.size());
    state.second_moment.resize(params.params.size());
    for (std::size_t i = 0; i < params.params.size(); ++i) {
      state.first_moment[i].assign(params.params[i].second.numel(), T(0));
      state.second_moment[i].assign(params.params[i].second.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.params.size())
    throw ContractError("adam_step: state/parameter count mismatch");
  ++state.step_count;
  const T b1 = state.beta1, b2 = state.beta2;
  const T bc1 = T(1) - std::pow(b1, T(state.step_count));
  const T bc2 = T(1) - std::pow(b2, T(state.step_count));
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    Tensor<T>& p = params.params[i].second;
    if (p.node()->grad.size() != p.numel())
      throw ContractError("adam_step: parameter '" + params.params[i].first +
                          "' has no gradient");
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = p.grad();
    auto& d = p.data();
    for (std::size_t k = 0; k < d.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] / bc1;
      const T vhat = v[k] / bc2;
      d[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace epiwarp
