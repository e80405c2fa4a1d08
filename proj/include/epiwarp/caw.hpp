#pragma once

// Content-aware warping: learned per-neighbor interpolation weights and the
// weighted gathers for images, embeddings, and feature maps.

#include "epiwarp/embedding.hpp"
#include "epiwarp/image_io.hpp"
#include "epiwarp/nbr_ops.hpp"

namespace epiwarp {

template <class T>
struct WeightVolume {
  Tensor<T> weights;                     // [M,H,W], masked softmax over M
  Tensor<T> logits;                      // [M,H,W]
  Tensor<T> weight_rows;                 // [M*P,1], same values as weights
  std::vector<std::uint8_t> validity;    // [M*H*W]
  std::vector<std::uint8_t> supervisable;  // [H*W], >= 1 valid neighbor
};

// f_w applied identically per neighbor, then masked softmax over M
template <class T>
WeightVolume<T> predict_weights(const Tensor<T>& embedding_rows,
                                const NeighborhoodIndex& nbr,
                                const Mlp<T>& fw) {
  const std::size_t P = nbr.height * nbr.width, M = nbr.M;
  if (embedding_rows.rank() != 2 || embedding_rows.dim(0) != M * P)
    throw DimensionError("predict_weights: embedding rows must be [M*P, E]");
  WeightVolume<T> wv;
  Tensor<T> logits = fw(embedding_rows);
  if (logits.dim(1) != 1)
    throw ContractError("predict_weights: f_w must emit one logit per neighbor");
  wv.weight_rows = masked_softmax_rows(logits, nbr);
  wv.weights = reshape(wv.weight_rows, {M, nbr.height, nbr.width});
  wv.logits = reshape(logits, {M, nbr.height, nbr.width});
  wv.validity = nbr.valid;
  wv.supervisable.resize(P);
  for (std::size_t p = 0; p < P; ++p)
    wv.supervisable[p] = nbr.valid_count[p] > 0;
  return wv;
}

// output(x_t) = sum_m weights[m,x_t] * field(x_s[m]); [C,Ht,Wt]
template <class T>
Tensor<T> weighted_gather(const Tensor<T>& field, const NeighborhoodIndex& nbr,
                          const Tensor<T>& weight_rows) {
  Tensor<T> rows = gather_rows(field, nbr);
  Tensor<T> out = weighted_sum_rows(rows, weight_rows, nbr.M);
  return reshape(transpose2d(out), {field.dim(0), nbr.height, nbr.width});
}

template <class T>
struct CawResult {
  Tensor<T> image;        // [C,Ht,Wt]
  Tensor<T> embedding;    // [P, E_total], aggregated per target pixel
  WeightVolume<T> weights;
};

// One weight prediction, two gathers sharing the same weights.
template <class T>
CawResult<T> content_aware_warp(const View<T>& source,
                                const NeighborhoodIndex& nbr,
                                const EmbeddingBundle<T>& bundle,
                                const Mlp<T>& fw) {
  CawResult<T> res;
  res.weights = predict_weights(bundle.concatenated, nbr, fw);
  res.image = weighted_gather(source.image, nbr, res.weights.weight_rows);
  res.embedding =
      weighted_sum_rows(bundle.concatenated, res.weights.weight_rows, nbr.M);
  return res;
}

// one PFM per neighbor slice: prefix_00.pfm, prefix_01.pfm, ...
template <class T>
void dump_weight_volume(const std::string& prefix, const WeightVolume<T>& wv) {
  const std::size_t M = wv.weights.dim(0);
  for (std::size_t m = 0; m < M; ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%02zu.pfm", m);
    write_pfm(prefix + name, slice(wv.weights, 0, m, 1));
  }
}

}  // namespace epiwarp
