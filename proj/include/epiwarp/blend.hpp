#pragma once

// Confidence-based blending of the N warped views into the intermediate
// novel view.

#include "epiwarp/caw.hpp"

namespace epiwarp {

template <class T>
struct ConfidenceVolume {
  Tensor<T> confidences;  // [N,H,W], softmax over sources
  Tensor<T> rows;         // [P,N], same values
};

// f_b: pixelwise MLP shared across source slots. Each slot sees its own
// aggregated embedding plus the cross-source mean, emits one logit, and the
// logits are softmaxed over sources. Slot sharing makes the map equivariant
// under source permutation, so identical embeddings blend at exactly 1/N.
template <class T>
ConfidenceVolume<T> confidence_net_fb(const std::vector<Tensor<T>>& aggregated,
                                      const Mlp<T>& fb, std::size_t H,
                                      std::size_t W) {
  const std::size_t N = aggregated.size();
  if (N == 0) throw ConfigError("confidence net: no aggregated embeddings");
  const std::size_t P = H * W;
  for (const auto& a : aggregated)
    if (a.rank() != 2 || a.dim(0) != P ||
        a.dim(1) != aggregated[0].dim(1))
      throw ConfigError("confidence net: aggregated embedding grid mismatch");
  if (fb.layers.front().weight.dim(0) != 2 * aggregated[0].dim(1))
    throw ConfigError("confidence net: f_b input width does not match N slots");
  if (fb.layers.back().weight.dim(1) != 1)
    throw ConfigError("confidence net: f_b must emit one logit per slot");
  Tensor<T> mean = aggregated[0];
  for (std::size_t s = 1; s < N; ++s) mean = add(mean, aggregated[s]);
  mean = mul_scalar(mean, T(1) / T(N));
  std::vector<Tensor<T>> logits;
  for (std::size_t s = 0; s < N; ++s)
    logits.push_back(fb(concat<T>({aggregated[s], mean}, 1)));
  ConfidenceVolume<T> cv;
  cv.rows = softmax(concat<T>(logits, 1), 1);
  cv.confidences = reshape(transpose2d(cv.rows), {N, H, W});
  return cv;
}

// I_t^b = sum_s conf_s * warped_s
template <class T>
Tensor<T> blend(const std::vector<Tensor<T>>& warped,
                const ConfidenceVolume<T>& conf) {
  if (warped.empty()) throw ConfigError("blend: no warped views");
  const std::size_t N = warped.size();
  if (conf.confidences.dim(0) != N)
    throw DimensionError("blend: confidence count does not match views");
  Tensor<T> out;
  for (std::size_t s = 0; s < N; ++s) {
    if (warped[s].shape() != warped[0].shape())
      throw DimensionError("blend: warped view shapes differ");
    Tensor<T> c = slice(conf.confidences, 0, s, 1);
    Tensor<T> term = mul(warped[s], c);
    out = s == 0 ? term : add(out, term);
  }
  return out;
}

template <class T>
void dump_confidence_volume(const std::string& prefix,
                            const ConfidenceVolume<T>& cv) {
  const std::size_t N = cv.confidences.dim(0);
  for (std::size_t s = 0; s < N; ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%02zu.pfm", s);
    write_pfm(prefix + name, slice(cv.confidences, 0, s, 1));
  }
}

}  // namespace epiwarp
