#pragma once

// Small learned building blocks on top of the autodiff tensor:
// linear layers, 3x3 zero-padded convolutions (im2col + matmul),
// residual CNNs, a 2-scale U-Net, and fixed-kernel depthwise filtering.

#include <cassert>
#include <string>
#include <utility>

#include "epiwarp/tensor.hpp"

namespace epiwarp {

template <class T>
struct ParamStore {
  std::vector<std::pair<std::string, Tensor<T>>> params;

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    params.emplace_back(name, std::move(t));
    return params.back().second;
  }
  void zero_grads() {
    for (auto& [n, p] : params) p.zero_grad();
  }
  Tensor<T>* find(const std::string& name) {
    for (auto& [n, p] : params)
      if (n == name) return &p;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// im2col for 3x3 kernels, zero padding 1: [C,H,W] -> [C*9, H*W]

template <class T>
Tensor<T> im2col3(const Tensor<T>& x) {
  if (x.rank() != 3) throw DimensionError("im2col3 expects [C,H,W]");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<T> cols(C * 9 * H * W, T(0));
  const auto& xd = x.data();
  for (std::size_t c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols.data() + ((c * 9) + ky * 3 + kx) * H * W;
        for (std::size_t y = 0; y < H; ++y) {
          const int sy = int(y) + ky - 1;
          if (sy < 0 || sy >= int(H)) continue;
          const T* src = xd.data() + (c * H + sy) * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const int sx = int(xx) + kx - 1;
            if (sx >= 0 && sx < int(W)) dst[y * W + xx] = src[sx];
          }
        }
      }
  Tensor<T> res = make_op<T>({C * 9, H * W}, std::move(cols), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [x, rc, C, H, W]() {
      const auto& g = rc->grad;
      auto& gx = x.node()->grad;
      for (std::size_t c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const T* src = g.data() + ((c * 9) + ky * 3 + kx) * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              const int sy = int(y) + ky - 1;
              if (sy < 0 || sy >= int(H)) continue;
              T* dst = gx.data() + (c * H + sy) * W;
              for (std::size_t xx = 0; xx < W; ++xx) {
                const int sx = int(xx) + kx - 1;
                if (sx >= 0 && sx < int(W)) dst[sx] += src[y * W + xx];
              }
            }
          }
    };
  }
  return res;
}

// conv2d with 3x3 kernels and zero padding 1; spatial extents preserved.
// kernels: [C_out, C_in, 3, 3], bias: [C_out].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels,
                 const Tensor<T>& bias) {
  if (x.rank() != 3) throw DimensionError("conv2d input must be [C,H,W]");
  if (kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3)
    throw DimensionError("conv2d kernels must be [C_out,C_in,3,3], got " +
                         shape_str(kernels.shape()));
  if (kernels.dim(1) != x.dim(0))
    throw DimensionError("conv2d channel mismatch: input " +
                         shape_str(x.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
  if (bias.numel() != kernels.dim(0))
    throw DimensionError("conv2d bias length mismatch");
  const std::size_t Cout = kernels.dim(0), Cin = x.dim(0);
  const std::size_t H = x.dim(1), W = x.dim(2);
  Tensor<T> cols = im2col3(x);                                  // [Cin*9, HW]
  Tensor<T> kmat = reshape(kernels, {Cout, Cin * 9});
  Tensor<T> y = matmul(kmat, cols);                             // [Cout, HW]
  y = add(y, reshape(bias, {Cout, std::size_t(1)}));
  return reshape(y, {Cout, H, W});
}

// Depthwise filtering with a fixed (non-learned) square kernel, zero padding.
// Differentiable w.r.t. the image only; used for Gaussian windows.
template <class T>
Tensor<T> depthwise_filter(const Tensor<T>& x, const std::vector<T>& kernel,
                           std::size_t ksize) {
  if (x.rank() != 3) throw DimensionError("depthwise_filter expects [C,H,W]");
  if (kernel.size() != ksize * ksize)
    throw DimensionError("depthwise_filter kernel size mismatch");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int pad = int(ksize) / 2;
  auto apply = [&](const std::vector<T>& src, std::vector<T>& dst) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          T acc = T(0);
          for (std::size_t ky = 0; ky < ksize; ++ky) {
            const int sy = int(y) + int(ky) - pad;
            if (sy < 0 || sy >= int(H)) continue;
            for (std::size_t kx = 0; kx < ksize; ++kx) {
              const int sx = int(xx) + int(kx) - pad;
              if (sx < 0 || sx >= int(W)) continue;
              acc += kernel[ky * ksize + kx] * src[(c * H + sy) * W + sx];
            }
          }
          dst[(c * H + y) * W + xx] = acc;
        }
  };
  std::vector<T> out(x.numel());
  apply(x.data(), out);
  Tensor<T> res = make_op<T>(x.shape(), std::move(out), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    // the kernel is symmetric in every use; correlation == convolution
    std::vector<T> flipped(kernel.rbegin(), kernel.rend());
    res.node()->backward_fn = [x, rc, flipped, ksize, C, H, W, pad]() {
      const auto& g = rc->grad;
      auto& gx = x.node()->grad;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < W; ++xx) {
            T acc = T(0);
            for (std::size_t ky = 0; ky < ksize; ++ky) {
              const int sy = int(y) + int(ky) - pad;
              if (sy < 0 || sy >= int(H)) continue;
              for (std::size_t kx = 0; kx < ksize; ++kx) {
                const int sx = int(xx) + int(kx) - pad;
                if (sx < 0 || sx >= int(W)) continue;
                acc += flipped[ky * ksize + kx] * g[(c * H + sy) * W + sx];
              }
            }
            gx[(c * H + y) * W + xx] += acc;
          }
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// pooling / upsampling for the U-Net

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2) throw DimensionError("avg_pool2 requires even extents");
  const std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<T> out(C * Ho * Wo);
  const auto& xd = x.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        out[(c * Ho + y) * Wo + xx] =
            (xd[(c * H + 2 * y) * W + 2 * xx] + xd[(c * H + 2 * y) * W + 2 * xx + 1] +
             xd[(c * H + 2 * y + 1) * W + 2 * xx] +
             xd[(c * H + 2 * y + 1) * W + 2 * xx + 1]) * T(0.25);
  Tensor<T> res = make_op<T>({C, Ho, Wo}, std::move(out), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [x, rc, C, H, W, Ho, Wo]() {
      const auto& g = rc->grad;
      auto& gx = x.node()->grad;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < Ho; ++y)
          for (std::size_t xx = 0; xx < Wo; ++xx) {
            const T gv = g[(c * Ho + y) * Wo + xx] * T(0.25);
            gx[(c * H + 2 * y) * W + 2 * xx] += gv;
            gx[(c * H + 2 * y) * W + 2 * xx + 1] += gv;
            gx[(c * H + 2 * y + 1) * W + 2 * xx] += gv;
            gx[(c * H + 2 * y + 1) * W + 2 * xx + 1] += gv;
          }
    };
  }
  return res;
}

template <class T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = H * 2, Wo = W * 2;
  std::vector<T> out(C * Ho * Wo);
  const auto& xd = x.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        out[(c * Ho + y) * Wo + xx] = xd[(c * H + y / 2) * W + xx / 2];
  Tensor<T> res = make_op<T>({C, Ho, Wo}, std::move(out), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [x, rc, C, H, W, Ho, Wo]() {
      const auto& g = rc->grad;
      auto& gx = x.node()->grad;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < Ho; ++y)
          for (std::size_t xx = 0; xx < Wo; ++xx)
            gx[(c * H + y / 2) * W + xx / 2] += g[(c * Ho + y) * Wo + xx];
    };
  }
  return res;
}

// zero-pad spatially on the bottom/right to the requested extents
template <class T>
Tensor<T> pad_spatial(const Tensor<T>& x, std::size_t Ho, std::size_t Wo) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (Ho < H || Wo < W) throw DimensionError("pad_spatial cannot shrink");
  if (Ho == H && Wo == W) return x;
  std::vector<T> out(C * Ho * Wo, T(0));
  const auto& xd = x.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      std::copy(xd.begin() + (c * H + y) * W, xd.begin() + (c * H + y + 1) * W,
                out.begin() + (c * Ho + y) * Wo);
  Tensor<T> res = make_op<T>({C, Ho, Wo}, std::move(out), {x}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [x, rc, C, H, W, Ho, Wo]() {
      const auto& g = rc->grad;
      auto& gx = x.node()->grad;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < W; ++xx)
            gx[(c * H + y) * W + xx] += g[(c * Ho + y) * Wo + xx];
    };
  }
  return res;
}

template <class T>
Tensor<T> crop_spatial(const Tensor<T>& x, std::size_t Ho, std::size_t Wo) {
  if (Ho == x.dim(1) && Wo == x.dim(2)) return x;
  return slice(slice(x, 1, 0, Ho), 2, 0, Wo);
}

// ---------------------------------------------------------------------------
// layers

template <class T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in,
         std::size_t out, std::mt19937_64& rng) {
    weight = store.add(name + ".weight", init_param<T>({in, out}, in, rng));
    bias = store.add(name + ".bias", init_param<T>({out}, in, rng));
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return add(matmul(x, weight), bias);
  }
};

template <class T>
struct Conv3x3 {
  Tensor<T> kernels;  // [Cout, Cin, 3, 3]
  Tensor<T> bias;     // [Cout]

  Conv3x3() = default;
  Conv3x3(ParamStore<T>& store, const std::string& name, std::size_t cin,
          std::size_t cout, std::mt19937_64& rng) {
    weight_init(store, name, cin, cout, rng);
  }
  void weight_init(ParamStore<T>& store, const std::string& name,
                   std::size_t cin, std::size_t cout, std::mt19937_64& rng) {
    kernels = store.add(name + ".kernels",
                        init_param<T>({cout, cin, 3, 3}, cin * 9, rng));
    bias = store.add(name + ".bias", init_param<T>({cout}, cin * 9, rng));
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, kernels, bias);
  }
};

// pixelwise MLP over row matrices [rows, features], leaky-ReLU between layers
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  Mlp() = default;
  Mlp(ParamStore<T>& store, const std::string& name,
      const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers.emplace_back(store, name + ".fc" + std::to_string(i), widths[i],
                          widths[i + 1], rng);
  }
  Tensor<T> operator()(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = leaky_relu(x);
    }
    return x;
  }
};

template <class T>
struct ResidualBlock {
  Conv3x3<T> conv1, conv2;

  ResidualBlock() = default;
  ResidualBlock(ParamStore<T>& store, const std::string& name,
                std::size_t width, std::mt19937_64& rng)
      : conv1(store, name + ".conv1", width, width, rng),
        conv2(store, name + ".conv2", width, width, rng) {}
  Tensor<T> operator()(const Tensor<T>& x) const {
    return add(x, conv2(leaky_relu(conv1(x))));
  }
};

// head conv -> residual blocks -> tail conv
template <class T>
struct ResNet {
  Conv3x3<T> head, tail;
  std::vector<ResidualBlock<T>> blocks;

  ResNet() = default;
  ResNet(ParamStore<T>& store, const std::string& name, std::size_t cin,
         std::size_t width, std::size_t cout, std::size_t n_blocks,
         std::mt19937_64& rng)
      : head(store, name + ".head", cin, width, rng),
        tail(store, name + ".tail", width, cout, rng) {
    for (std::size_t i = 0; i < n_blocks; ++i)
      blocks.emplace_back(store, name + ".block" + std::to_string(i), width, rng);
  }
  Tensor<T> operator()(Tensor<T> x) const {
    x = leaky_relu(head(x));
    for (const auto& b : blocks) x = leaky_relu(b(x));
    return tail(x);
  }
};

// 2-scale encoder/decoder with one skip connection; odd extents are
// zero-padded to even internally and cropped back on output.
template <class T>
struct UNet2 {
  Conv3x3<T> enc1, enc2, dec1, dec2, out;

  UNet2() = default;
  UNet2(ParamStore<T>& store, const std::string& name, std::size_t cin,
        std::size_t width, std::size_t cout, std::mt19937_64& rng)
      : enc1(store, name + ".enc1", cin, width, rng),
        enc2(store, name + ".enc2", width, width * 2, rng),
        dec1(store, name + ".dec1", width * 2, width, rng),
        dec2(store, name + ".dec2", width * 2, width, rng),
        out(store, name + ".out", width, cout, rng) {}
  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::size_t H = x.dim(1), W = x.dim(2);
    Tensor<T> xp = pad_spatial(x, H + H % 2, W + W % 2);
    Tensor<T> e1 = leaky_relu(enc1(xp));
    Tensor<T> e2 = leaky_relu(enc2(avg_pool2(e1)));
    Tensor<T> up = leaky_relu(dec1(upsample_nearest2(e2)));
    Tensor<T> d = leaky_relu(dec2(concat<T>({up, e1}, 0)));
    return crop_spatial(out(d), H, W);
  }
};

}  // namespace epiwarp
