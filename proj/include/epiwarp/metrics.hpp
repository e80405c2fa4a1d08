#pragma once

// Evaluation metrics on [0,1] images.

#include "epiwarp/loss.hpp"

namespace epiwarp {

// PSNR = 10 log10(1 / MSE), capped at 99 dB for exact matches. An optional
// [H,W] mask restricts the mean to its nonzero pixels.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b,
            const Tensor<T>* mask = nullptr) {
  if (a.shape() != b.shape()) throw DimensionError("psnr: shapes differ");
  const std::size_t C = a.dim(0), HW = a.dim(1) * a.dim(2);
  double mse = 0, count = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < HW; ++p) {
      if (mask && mask->data()[p] == T(0)) continue;
      const double d = double(a.data()[c * HW + p]) - double(b.data()[c * HW + p]);
      mse += d * d;
      count += 1;
    }
  if (count == 0) throw ContractError("psnr: empty mask");
  mse /= count;
  const double db = 10.0 * std::log10(1.0 / mse);
  return std::min(db, 99.0);
}

struct MetricsReport {
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::vector<double> view_psnr;
  std::vector<double> view_ssim;

  void add(double p, double s) {
    view_psnr.push_back(p);
    view_ssim.push_back(s);
    mean_psnr = 0;
    mean_ssim = 0;
    for (double v : view_psnr) mean_psnr += v / double(view_psnr.size());
    for (double v : view_ssim) mean_ssim += v / double(view_ssim.size());
  }
};

}  // namespace epiwarp
