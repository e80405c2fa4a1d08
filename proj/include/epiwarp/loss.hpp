#pragma once

// Training objectives: masked reconstruction, SSIM, weight smoothness, and
// the composite loss. The perceptual term is an interface only; it needs a
// host-supplied feature extractor.

#include <fstream>
#include <functional>
#include <optional>

#include "epiwarp/caw.hpp"

namespace epiwarp {

// mean absolute error over valid-mask pixels, all channels
template <class T>
Tensor<T> masked_l1(const Tensor<T>& a, const Tensor<T>& b,
                    const Tensor<T>& mask) {
  if (a.shape() != b.shape())
    throw DimensionError("masked_l1: operand shapes differ");
  if (mask.rank() != 2 || mask.dim(0) != a.dim(1) || mask.dim(1) != a.dim(2))
    throw DimensionError("masked_l1: mask must be [H,W]");
  double count = 0;
  for (T v : mask.data()) count += double(v);
  if (count == 0) throw ContractError("masked_l1: empty valid mask");
  Tensor<T> m = reshape(mask, {std::size_t(1), a.dim(1), a.dim(2)});
  return mul_scalar(sum_all(mul(abs_t(sub(a, b)), m)),
                    T(1.0 / (count * double(a.dim(0)))));
}

// sum of masked mean-L1 of the final, intermediate, and each warped view
template <class T>
Tensor<T> recon_loss(const Tensor<T>& final_img, const Tensor<T>& intermediate,
                     const std::vector<Tensor<T>>& warped, const Tensor<T>& gt,
                     const Tensor<T>& valid_mask) {
  Tensor<T> loss = add(masked_l1(final_img, gt, valid_mask),
                       masked_l1(intermediate, gt, valid_mask));
  for (const auto& w : warped) loss = add(loss, masked_l1(w, gt, valid_mask));
  return loss;
}

namespace detail {

template <class T>
std::vector<T> gaussian_window(std::size_t ksize, double sigma) {
  std::vector<T> k(ksize * ksize);
  const double c = double(ksize - 1) / 2.0;
  double sum = 0;
  for (std::size_t y = 0; y < ksize; ++y)
    for (std::size_t x = 0; x < ksize; ++x) {
      const double v = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) /
                                (2 * sigma * sigma));
      k[y * ksize + x] = T(v);
      sum += v;
    }
  for (auto& v : k) v = T(double(v) / sum);
  return k;
}

template <class T>
Tensor<T> crop_border(const Tensor<T>& x, std::size_t b) {
  return slice(slice(x, 1, b, x.dim(1) - 2 * b), 2, b, x.dim(2) - 2 * b);
}

}  // namespace detail

// windowed SSIM, 11x11 Gaussian sigma 1.5, unit dynamic range. The map is
// averaged over the interior only so zero padding cannot bias the score.
template <class T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b) {
  constexpr std::size_t K = 11;
  if (a.shape() != b.shape())
    throw DimensionError("ssim: operand shapes differ");
  if (a.dim(1) < K || a.dim(2) < K)
    throw ConfigError("ssim: image smaller than the 11x11 window");
  const T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
  static const std::vector<T> win = detail::gaussian_window<T>(K, 1.5);
  auto filt = [&](const Tensor<T>& x) { return depthwise_filter(x, win, K); };
  Tensor<T> mu_a = filt(a), mu_b = filt(b);
  Tensor<T> var_a = sub(filt(mul(a, a)), mul(mu_a, mu_a));
  Tensor<T> var_b = sub(filt(mul(b, b)), mul(mu_b, mu_b));
  Tensor<T> cov = sub(filt(mul(a, b)), mul(mu_a, mu_b));
  Tensor<T> num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), T(2)), c1),
                      add_scalar(mul_scalar(cov, T(2)), c2));
  Tensor<T> den =
      mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1),
          add_scalar(add(var_a, var_b), c2));
  return mean_all(detail::crop_border(div(num, den), K / 2));
}

template <class T>
Tensor<T> ssim_loss(const Tensor<T>& a, const Tensor<T>& b) {
  return mul_scalar(add_scalar(neg(ssim(a, b)), T(1)), T(0.5));
}

// per slice: mean |forward x difference| over pairs with both pixels valid,
// plus the same for y; summed over slices
template <class T>
Tensor<T> weight_smoothness_term(const Tensor<T>& weights,
                                 const std::vector<std::uint8_t>& validity) {
  if (weights.rank() != 3)
    throw DimensionError("weight_smoothness: weights must be [M,H,W]");
  const std::size_t M = weights.dim(0), H = weights.dim(1), W = weights.dim(2);
  if (validity.size() != M * H * W)
    throw DimensionError("weight_smoothness: validity size mismatch");
  const auto& w = weights.data();
  T total = T(0);
  // per-pair sign bookkeeping for the backward pass
  std::vector<std::tuple<std::size_t, std::size_t, T>> pairs;  // (hi, lo, coef)
  for (std::size_t m = 0; m < M; ++m) {
    for (int axis = 0; axis < 2; ++axis) {
      const std::size_t step = axis == 0 ? 1 : W;
      std::vector<std::pair<std::size_t, std::size_t>> idx;
      for (std::size_t y = 0; y < (axis == 0 ? H : H - 1); ++y)
        for (std::size_t x = 0; x < (axis == 0 ? W - 1 : W); ++x) {
          const std::size_t i = (m * H + y) * W + x;
          if (validity[i] && validity[i + step]) idx.emplace_back(i, i + step);
        }
      if (idx.empty()) continue;
      const T inv = T(1) / T(idx.size());
      for (auto [i, j] : idx) {
        total += inv * std::abs(w[j] - w[i]);
        pairs.emplace_back(j, i, inv);
      }
    }
  }
  Tensor<T> res = make_op<T>({1}, {total}, {weights}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [weights, rc, pairs]() {
      const T g = rc->grad[0];
      auto& gw = weights.node()->grad;
      const auto& w = weights.data();
      for (auto [j, i, coef] : pairs) {
        const T s = w[j] > w[i] ? coef : (w[j] < w[i] ? -coef : T(0));
        gw[j] += g * s;
        gw[i] -= g * s;
      }
    };
  }
  return res;
}

template <class T>
Tensor<T> weight_smoothness(const std::vector<WeightVolume<T>>& volumes) {
  Tensor<T> total;
  for (std::size_t s = 0; s < volumes.size(); ++s) {
    Tensor<T> term =
        weight_smoothness_term(volumes[s].weights, volumes[s].validity);
    total = s == 0 ? term : add(total, term);
  }
  return total;
}

// host-pluggable perceptual term; mean L1 between extracted features
template <class T>
using FeatureExtractor = std::function<Tensor<T>(const Tensor<T>&)>;

template <class T>
Tensor<T> perceptual_loss(const FeatureExtractor<T>& extractor,
                          const Tensor<T>& a, const Tensor<T>& b) {
  if (!extractor) throw ConfigError("perceptual loss: no feature extractor");
  return mean_all(abs_t(sub(extractor(a), extractor(b))));
}

template <class T>
struct LossReport {
  double recon = 0;
  double ssim_loss = 0;
  double weight_smooth = 0;
  std::optional<double> perceptual;
  double total = 0;
  double lambda = 0;
};

template <class T>
struct TotalLoss {
  Tensor<T> value;  // scalar, in the graph
  LossReport<T> report;
};

template <class T>
TotalLoss<T> total_loss(const Tensor<T>& recon, const Tensor<T>& ssim_l,
                        const Tensor<T>& smooth, double lambda,
                        const std::optional<Tensor<T>>& perceptual = {}) {
  if (lambda < 0) throw ConfigError("total_loss: lambda must be >= 0");
  TotalLoss<T> out;
  out.value = add(add(recon, ssim_l), mul_scalar(smooth, T(lambda)));
  if (perceptual) out.value = add(out.value, *perceptual);
  out.report.recon = double(recon.item());
  out.report.ssim_loss = double(ssim_l.item());
  out.report.weight_smooth = double(smooth.item());
  if (perceptual) out.report.perceptual = double(perceptual->item());
  out.report.lambda = lambda;
  out.report.total = double(out.value.item());
  return out;
}

template <class T>
void append_loss_csv(const std::string& path, std::size_t step,
                     const LossReport<T>& r) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream f(path, std::ios::app);
  if (fresh) f << "step,recon,ssim_loss,weight_smooth,total\n";
  f.precision(10);
  f << step << "," << r.recon << "," << r.ssim_loss << "," << r.weight_smooth
    << "," << r.total << "\n";
}

}  // namespace epiwarp
