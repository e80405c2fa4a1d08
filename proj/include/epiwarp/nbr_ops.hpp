#pragma once

// Differentiable ops over epipolar neighborhoods. Row matrices are laid out
// [M*P, C] with row r = m*P + p, matching NeighborhoodIndex entry order.

#include "epiwarp/geometry.hpp"
#include "epiwarp/tensor.hpp"

namespace epiwarp {

template <class T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.rank() != 2) throw DimensionError("transpose2d: rank-2 input required");
  const std::size_t R = x.dim(0), C = x.dim(1);
  std::vector<T> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = x.data()[r * C + c];
  Tensor<T> res = make_op<T>({C, R}, std::move(out), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [x, rc, R, C]() {
      auto& gx = x.node()->grad;
      const auto& g = rc->grad;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c * R + r];
    };
  }
  return res;
}

// field [C,Hs,Ws] -> [M*P, C]; invalid entries read as zero
template <class T>
Tensor<T> gather_rows(const Tensor<T>& field, const NeighborhoodIndex& nbr) {
  if (field.rank() != 3 || field.dim(1) != nbr.src_height ||
      field.dim(2) != nbr.src_width)
    throw DimensionError("gather_rows: field does not match source extents");
  const std::size_t C = field.dim(0), Hs = nbr.src_height, Ws = nbr.src_width;
  const std::size_t MP = nbr.M * nbr.height * nbr.width;
  std::vector<T> out(MP * C, T(0));
  for (std::size_t r = 0; r < MP; ++r) {
    if (!nbr.valid[r]) continue;
    const std::size_t src = std::size_t(nbr.ys[r]) * Ws + std::size_t(nbr.xs[r]);
    for (std::size_t c = 0; c < C; ++c)
      out[r * C + c] = field.data()[c * Hs * Ws + src];
  }
  Tensor<T> res = make_op<T>({MP, C}, std::move(out), {field}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [field, rc, nbr, C, Hs, Ws, MP]() {
      auto& gf = field.node()->grad;
      const auto& g = rc->grad;
      for (std::size_t r = 0; r < MP; ++r) {
        if (!nbr.valid[r]) continue;
        const std::size_t src =
            std::size_t(nbr.ys[r]) * Ws + std::size_t(nbr.xs[r]);
        for (std::size_t c = 0; c < C; ++c)
          gf[c * Hs * Ws + src] += g[r * C + c];
      }
    };
  }
  return res;
}

// [P,C] -> [M*P,C], every neighbor sees the same per-pixel row
template <class T>
Tensor<T> repeat_rows(const Tensor<T>& x, std::size_t M) {
  std::vector<Tensor<T>> copies(M, x);
  return concat<T>(copies, 0);
}

// mean over valid neighbors; pixels with no valid neighbor yield zeros
template <class T>
Tensor<T> masked_mean_rows(const Tensor<T>& rows, const NeighborhoodIndex& nbr) {
  const std::size_t P = nbr.height * nbr.width, M = nbr.M;
  if (rows.rank() != 2 || rows.dim(0) != M * P)
    throw DimensionError("masked_mean_rows: rows must be [M*P, C]");
  const std::size_t C = rows.dim(1);
  std::vector<T> out(P * C, T(0));
  for (std::size_t p = 0; p < P; ++p) {
    if (nbr.valid_count[p] == 0) continue;
    const T inv = T(1) / T(nbr.valid_count[p]);
    for (std::size_t m = 0; m < M; ++m) {
      if (!nbr.valid[m * P + p]) continue;
      for (std::size_t c = 0; c < C; ++c)
        out[p * C + c] += inv * rows.data()[(m * P + p) * C + c];
    }
  }
  Tensor<T> res = make_op<T>({P, C}, std::move(out), {rows}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [rows, rc, nbr, P, M, C]() {
      auto& gr = rows.node()->grad;
      const auto& g = rc->grad;
      for (std::size_t p = 0; p < P; ++p) {
        if (nbr.valid_count[p] == 0) continue;
        const T inv = T(1) / T(nbr.valid_count[p]);
        for (std::size_t m = 0; m < M; ++m) {
          if (!nbr.valid[m * P + p]) continue;
          for (std::size_t c = 0; c < C; ++c)
            gr[(m * P + p) * C + c] += inv * g[p * C + c];
        }
      }
    };
  }
  return res;
}

// population variance over valid neighbors; no-valid pixels yield zeros
template <class T>
Tensor<T> masked_variance_rows(const Tensor<T>& rows,
                               const NeighborhoodIndex& nbr) {
  const std::size_t P = nbr.height * nbr.width, M = nbr.M;
  if (rows.rank() != 2 || rows.dim(0) != M * P)
    throw DimensionError("masked_variance_rows: rows must be [M*P, C]");
  const std::size_t C = rows.dim(1);
  std::vector<T> mean(P * C, T(0)), out(P * C, T(0));
  for (std::size_t p = 0; p < P; ++p) {
    if (nbr.valid_count[p] == 0) continue;
    const T inv = T(1) / T(nbr.valid_count[p]);
    for (std::size_t m = 0; m < M; ++m)
      if (nbr.valid[m * P + p])
        for (std::size_t c = 0; c < C; ++c)
          mean[p * C + c] += inv * rows.data()[(m * P + p) * C + c];
    for (std::size_t m = 0; m < M; ++m)
      if (nbr.valid[m * P + p])
        for (std::size_t c = 0; c < C; ++c) {
          const T d = rows.data()[(m * P + p) * C + c] - mean[p * C + c];
          out[p * C + c] += inv * d * d;
        }
  }
  Tensor<T> res = make_op<T>({P, C}, std::move(out), {rows}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [rows, rc, nbr, P, M, C, mean]() {
      auto& gr = rows.node()->grad;
      const auto& g = rc->grad;
      for (std::size_t p = 0; p < P; ++p) {
        if (nbr.valid_count[p] == 0) continue;
        const T inv = T(1) / T(nbr.valid_count[p]);
        for (std::size_t m = 0; m < M; ++m) {
          if (!nbr.valid[m * P + p]) continue;
          for (std::size_t c = 0; c < C; ++c) {
            const T d = rows.data()[(m * P + p) * C + c] - mean[p * C + c];
            gr[(m * P + p) * C + c] += g[p * C + c] * T(2) * inv * d;
          }
        }
      }
    };
  }
  return res;
}

// softmax over the neighbor axis restricted to valid entries; invalid
// entries get weight exactly 0, all-invalid pixels a zero row
template <class T>
Tensor<T> masked_softmax_rows(const Tensor<T>& logits,
                              const NeighborhoodIndex& nbr) {
  const std::size_t P = nbr.height * nbr.width, M = nbr.M;
  if (logits.rank() != 2 || logits.dim(0) != M * P || logits.dim(1) != 1)
    throw DimensionError("masked_softmax_rows: logits must be [M*P, 1]");
  for (std::size_t r = 0; r < M * P; ++r)
    if (nbr.valid[r] && std::isnan(logits.data()[r]))
      throw NumericError("masked_softmax_rows: NaN logit");
  std::vector<T> out(M * P, T(0));
  for (std::size_t p = 0; p < P; ++p) {
    if (nbr.valid_count[p] == 0) continue;
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t m = 0; m < M; ++m)
      if (nbr.valid[m * P + p]) hi = std::max(hi, logits.data()[m * P + p]);
    T z = T(0);
    for (std::size_t m = 0; m < M; ++m)
      if (nbr.valid[m * P + p]) {
        out[m * P + p] = std::exp(logits.data()[m * P + p] - hi);
        z += out[m * P + p];
      }
    for (std::size_t m = 0; m < M; ++m) out[m * P + p] /= z;
  }
  Tensor<T> res = make_op<T>({M * P, std::size_t(1)}, std::move(out), {logits},
                             nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [logits, rc, nbr, P, M]() {
      auto& gl = logits.node()->grad;
      const auto& g = rc->grad;
      const auto& w = rc->data;
      for (std::size_t p = 0; p < P; ++p) {
        if (nbr.valid_count[p] == 0) continue;
        T dot = T(0);
        for (std::size_t m = 0; m < M; ++m)
          dot += g[m * P + p] * w[m * P + p];
        for (std::size_t m = 0; m < M; ++m)
          if (nbr.valid[m * P + p])
            gl[m * P + p] += w[m * P + p] * (g[m * P + p] - dot);
      }
    };
  }
  return res;
}

// out[p,c] = sum_m weights[m*P+p] * rows[m*P+p, c]
template <class T>
Tensor<T> weighted_sum_rows(const Tensor<T>& rows, const Tensor<T>& weights,
                            std::size_t M) {
  if (rows.rank() != 2 || weights.rank() != 2 || weights.dim(1) != 1 ||
      weights.dim(0) != rows.dim(0) || rows.dim(0) % M != 0)
    throw DimensionError("weighted_sum_rows: misaligned rows/weights");
  const std::size_t P = rows.dim(0) / M, C = rows.dim(1);
  std::vector<T> out(P * C, T(0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t p = 0; p < P; ++p) {
      const T w = weights.data()[m * P + p];
      if (w == T(0)) continue;
      for (std::size_t c = 0; c < C; ++c)
        out[p * C + c] += w * rows.data()[(m * P + p) * C + c];
    }
  Tensor<T> res = make_op<T>({P, C}, std::move(out), {rows, weights}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [rows, weights, rc, P, M, C]() {
      const auto& g = rc->grad;
      const bool want_rows = rows.requires_grad();
      const bool want_w = weights.requires_grad();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t r = m * P + p;
          if (want_rows) {
            const T w = weights.data()[r];
            if (w != T(0))
              for (std::size_t c = 0; c < C; ++c)
                rows.node()->grad[r * C + c] += w * g[p * C + c];
          }
          if (want_w) {
            T acc = T(0);
            for (std::size_t c = 0; c < C; ++c)
              acc += g[p * C + c] * rows.data()[r * C + c];
            weights.node()->grad[r] += acc;
          }
        }
    };
  }
  return res;
}

}  // namespace epiwarp
