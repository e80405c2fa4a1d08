#pragma once

// Classic distance-weighted warping: differentiable bilinear sampling,
// backward warping by flow, and plane-sweep volume construction.

#include "epiwarp/geometry.hpp"
#include "epiwarp/tensor.hpp"
#include "epiwarp/view.hpp"

namespace epiwarp {

template <class T>
struct WarpResult {
  Tensor<T> image;                   // [C,Ho,Wo]
  std::vector<std::uint8_t> valid;   // [Ho*Wo], 1 iff the full 2x2 support
                                     // lies inside the source image
};

// 2x2 distance-weighted sampling of `image` at absolute pixel positions
// coords[0]=x, coords[1]=y. Out-of-bounds corners contribute zero and
// clear validity. Differentiable w.r.t. both image and coords.
template <class T>
WarpResult<T> bilinear_sample(const Tensor<T>& image, const Tensor<T>& coords) {
  if (image.rank() != 3) throw DimensionError("bilinear_sample: image [C,H,W]");
  if (coords.rank() != 3 || coords.dim(0) != 2)
    throw DimensionError("bilinear_sample: coords must be [2,Ho,Wo]");
  for (T v : coords.data())
    if (std::isnan(v)) throw NumericError("bilinear_sample: NaN coordinate");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const std::size_t Ho = coords.dim(1), Wo = coords.dim(2);
  const std::size_t P = Ho * Wo;

  WarpResult<T> res;
  res.valid.assign(P, 0);
  std::vector<T> out(C * P, T(0));
  const auto& img = image.data();
  const auto& cd = coords.data();
  for (std::size_t p = 0; p < P; ++p) {
    const double px = double(cd[p]), py = double(cd[P + p]);
    const double fx = std::floor(px), fy = std::floor(py);
    const int x0 = int(fx), y0 = int(fy);
    const T ax = T(px - fx), ay = T(py - fy);
    const T w00 = (T(1) - ax) * (T(1) - ay), w01 = ax * (T(1) - ay);
    const T w10 = (T(1) - ax) * ay, w11 = ax * ay;
    const bool in00 = x0 >= 0 && y0 >= 0 && x0 < int(W) && y0 < int(H);
    const bool in01 = x0 + 1 >= 0 && y0 >= 0 && x0 + 1 < int(W) && y0 < int(H);
    const bool in10 = x0 >= 0 && y0 + 1 >= 0 && x0 < int(W) && y0 + 1 < int(H);
    const bool in11 =
        x0 + 1 >= 0 && y0 + 1 >= 0 && x0 + 1 < int(W) && y0 + 1 < int(H);
    res.valid[p] = in00 && in01 && in10 && in11;
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      if (in00) acc += w00 * img[(c * H + y0) * W + x0];
      if (in01) acc += w01 * img[(c * H + y0) * W + x0 + 1];
      if (in10) acc += w10 * img[(c * H + y0 + 1) * W + x0];
      if (in11) acc += w11 * img[(c * H + y0 + 1) * W + x0 + 1];
      out[c * P + p] = acc;
    }
  }
  res.image = make_op<T>({C, Ho, Wo}, std::move(out), {image, coords}, nullptr);
  if (res.image.requires_grad()) {
    auto* rc = res.image.node().get();
    res.image.node()->backward_fn = [image, coords, rc, C, H, W, P]() {
      const auto& g = rc->grad;
      const auto& img = image.data();
      const auto& cd = coords.data();
      const bool want_img = image.requires_grad();
      const bool want_crd = coords.requires_grad();
      auto& gi = image.node()->grad;
      auto& gc = coords.node()->grad;
      for (std::size_t p = 0; p < P; ++p) {
        const double px = double(cd[p]), py = double(cd[P + p]);
        const double fx = std::floor(px), fy = std::floor(py);
        const int x0 = int(fx), y0 = int(fy);
        const T ax = T(px - fx), ay = T(py - fy);
        const bool in00 = x0 >= 0 && y0 >= 0 && x0 < int(W) && y0 < int(H);
        const bool in01 = x0 + 1 >= 0 && y0 >= 0 && x0 + 1 < int(W) && y0 < int(H);
        const bool in10 = x0 >= 0 && y0 + 1 >= 0 && x0 < int(W) && y0 + 1 < int(H);
        const bool in11 =
            x0 + 1 >= 0 && y0 + 1 >= 0 && x0 + 1 < int(W) && y0 + 1 < int(H);
        for (std::size_t c = 0; c < C; ++c) {
          const T gv = g[c * P + p];
          if (gv == T(0)) continue;
          const T v00 = in00 ? img[(c * H + y0) * W + x0] : T(0);
          const T v01 = in01 ? img[(c * H + y0) * W + x0 + 1] : T(0);
          const T v10 = in10 ? img[(c * H + y0 + 1) * W + x0] : T(0);
          const T v11 = in11 ? img[(c * H + y0 + 1) * W + x0 + 1] : T(0);
          if (want_img) {
            if (in00) gi[(c * H + y0) * W + x0] += gv * (T(1) - ax) * (T(1) - ay);
            if (in01) gi[(c * H + y0) * W + x0 + 1] += gv * ax * (T(1) - ay);
            if (in10) gi[(c * H + y0 + 1) * W + x0] += gv * (T(1) - ax) * ay;
            if (in11) gi[(c * H + y0 + 1) * W + x0 + 1] += gv * ax * ay;
          }
          if (want_crd) {
            gc[p] += gv * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
            gc[P + p] += gv * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
          }
        }
      }
    };
  }
  return res;
}

template <class T>
Tensor<T> identity_grid(std::size_t H, std::size_t W) {
  std::vector<T> v(2 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      v[y * W + x] = T(x);
      v[(H + y) * W + x] = T(y);
    }
  return Tensor<T>::from({2, H, W}, std::move(v));
}

// output(x) = bilinear_sample(source, x + flow(x))
template <class T>
WarpResult<T> backward_warp(const Tensor<T>& source, const Tensor<T>& flow) {
  if (flow.rank() != 3 || flow.dim(0) != 2)
    throw DimensionError("backward_warp: flow must be [2,H,W]");
  return bilinear_sample(source, add(identity_grid<T>(flow.dim(1), flow.dim(2)),
                                     flow));
}

// Stack of the source image backward-warped to the target under D constant
// depths, uniform in inverse depth over the target's range.
template <class T>
struct PlaneSweepVolume {
  Tensor<T> layers;                 // [D,C,H,W]
  std::vector<double> depths;       // strictly increasing in inverse depth
  std::vector<std::uint8_t> valid;  // [D*H*W]
};

template <class T>
PlaneSweepVolume<T> build_psv(const View<T>& source, const Camera& target_cam,
                              const DepthRange& range, std::size_t D,
                              std::size_t tgt_h, std::size_t tgt_w) {
  if (D < 2) throw ConfigError("build_psv: D >= 2 required");
  if (range.d_min <= 0 || range.d_min >= range.d_max)
    throw ConfigError("build_psv: need 0 < d_min < d_max");
  const double inv_lo = std::isinf(range.d_max) ? 0.0 : 1.0 / range.d_max;
  const double inv_hi = 1.0 / range.d_min;

  PlaneSweepVolume<T> psv;
  psv.valid.assign(D * tgt_h * tgt_w, 0);
  std::vector<Tensor<T>> layers;
  for (std::size_t d = 0; d < D; ++d) {
    // far-to-near so inverse depth increases with d
    const double inv = inv_lo + (inv_hi - inv_lo) * double(d) / double(D - 1);
    psv.depths.push_back(inv > 0 ? 1.0 / inv
                                 : std::numeric_limits<double>::infinity());
    Tensor<T> coords = Tensor<T>::zeros({2, tgt_h, tgt_w});
    for (std::size_t y = 0; y < tgt_h; ++y)
      for (std::size_t x = 0; x < tgt_w; ++x) {
        const Projection p = project_invdepth({double(x), double(y)}, inv,
                                              target_cam, source.camera);
        const std::size_t i = y * tgt_w + x;
        if (p.in_front) {
          coords.data()[i] = T(p.x);
          coords.data()[tgt_h * tgt_w + i] = T(p.y);
        } else {
          coords.data()[i] = T(-1e9);  // far outside: zero sample, invalid
          coords.data()[tgt_h * tgt_w + i] = T(-1e9);
        }
      }
    WarpResult<T> w = bilinear_sample(source.image, coords);
    std::copy(w.valid.begin(), w.valid.end(),
              psv.valid.begin() + std::ptrdiff_t(d * tgt_h * tgt_w));
    layers.push_back(reshape(w.image, {std::size_t(1), source.channels(),
                                       tgt_h, tgt_w}));
  }
  psv.layers = concat<T>(layers, 0);
  return psv;
}

}  // namespace epiwarp
