#include <gtest/gtest.h>

#include <random>

#include "epiwarp/gradcheck.hpp"
#include "epiwarp/loss.hpp"

using namespace epiwarp;
using Tf = Tensor<float>;
using Td = Tensor<double>;

namespace {

template <class T>
Tensor<T> random_image(Shape shape, unsigned seed, T lo = 0, T hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<T> d(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor<T>::from(shape, std::move(v));
}

}  // namespace

TEST(Recon, PerfectPredictionIsZero) {
  auto gt = random_image<double>({3, 4, 4}, 1);
  auto mask = Td::filled({4, 4}, 1.0);
  auto loss = recon_loss<double>(gt, gt, {gt, gt}, gt, mask);
  EXPECT_DOUBLE_EQ(loss.item(), 0.0);
}

TEST(Recon, ConstantOffsetArithmetic) {
  auto gt = random_image<double>({3, 4, 4}, 2);
  auto off = add_scalar(gt, 0.1);
  auto mask = Td::filled({4, 4}, 1.0);
  auto loss = recon_loss<double>(off, off, {off, off}, gt, mask);
  EXPECT_NEAR(loss.item(), 0.4, 1e-12);
}

TEST(Recon, MatchesBruteForceLoop) {
  auto gt = random_image<double>({3, 5, 5}, 3);
  auto a = random_image<double>({3, 5, 5}, 4);
  auto b = random_image<double>({3, 5, 5}, 5);
  std::vector<double> mv(25);
  std::mt19937_64 rng(6);
  for (auto& m : mv) m = rng() % 2;
  auto mask = Td::from({5, 5}, std::vector<double>(mv));
  double count = 0;
  for (double m : mv) count += m;
  double expect = 0;
  for (const auto* img : {&a, &b}) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 25; ++p)
        s += mv[p] * std::abs(img->data()[c * 25 + p] - gt.data()[c * 25 + p]);
    expect += s / (3 * count);
  }
  auto loss = recon_loss<double>(a, b, {}, gt, mask);
  EXPECT_NEAR(loss.item(), expect, 1e-6);
}

TEST(Recon, EmptyMaskRejected) {
  auto gt = random_image<double>({1, 3, 3}, 7);
  EXPECT_THROW(recon_loss<double>(gt, gt, {}, gt, Td::zeros({3, 3})),
               ContractError);
}

TEST(Recon, MaskingZeroErrorRegionLeavesLossUnchanged) {
  auto gt = random_image<double>({1, 4, 4}, 8);
  auto pred = gt;
  pred.data()[5] += 0.3;  // error only at pixel 5
  auto full = Td::filled({4, 4}, 1.0);
  std::vector<double> mv(16, 1.0);
  mv[10] = 0;  // mask out a pixel that already has zero error
  auto partial = Td::from({4, 4}, std::move(mv));
  const double lf = masked_l1(pred, gt, full).item() * 16;
  const double lp = masked_l1(pred, gt, partial).item() * 15;
  EXPECT_NEAR(lf, lp, 1e-12);
}

TEST(Ssim, SelfSimilarityIsOne) {
  auto x = random_image<double>({3, 16, 16}, 9);
  EXPECT_NEAR(ssim(x, x).item(), 1.0, 1e-9);
  EXPECT_NEAR(ssim_loss(x, x).item(), 0.0, 1e-9);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  std::vector<double> v(1 * 16 * 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) v[y * 16 + x] = double((x + y) % 2);
  auto a = Td::from({1, 16, 16}, std::move(v));
  auto b = add_scalar(neg(a), 1.0);
  EXPECT_LT(ssim(a, b).item(), 0.0);
}

TEST(Ssim, ConstantImagesMatchHandFormula) {
  auto a = Td::filled({1, 12, 12}, 0.3);
  auto b = Td::filled({1, 12, 12}, 0.5);
  const double c1 = 1e-4;
  const double expect = (2 * 0.3 * 0.5 + c1) / (0.09 + 0.25 + c1);
  EXPECT_NEAR(ssim(a, b).item(), expect, 1e-9);
}

TEST(Ssim, WindowLargerThanImageRejected) {
  auto a = Td::zeros({1, 8, 8});
  EXPECT_THROW(ssim(a, a), ConfigError);
}

TEST(Ssim, GradMatchesFiniteDifference) {
  auto a = random_image<double>({1, 12, 12}, 10);
  auto b = random_image<double>({1, 12, 12}, 11);
  a.set_requires_grad(true);
  auto res = gradcheck([&] { return ssim_loss(a, b); }, {a}, 1e-5, 10);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(Smoothness, ConstantMapsAreZero) {
  WeightVolume<double> wv;
  wv.weights = Td::filled({2, 3, 3}, 0.5);
  wv.validity.assign(18, 1);
  EXPECT_DOUBLE_EQ(weight_smoothness<double>({wv}).item(), 0.0);
}

TEST(Smoothness, TwoColumnSliceArithmetic) {
  WeightVolume<double> wv;
  wv.weights = Td::from({1, 2, 2}, {0, 1, 0, 1});
  wv.validity.assign(4, 1);
  EXPECT_DOUBLE_EQ(weight_smoothness<double>({wv}).item(), 1.0);
}

TEST(Smoothness, MatchesBruteForceLoop) {
  auto w = random_image<double>({3, 4, 5}, 12);
  std::vector<std::uint8_t> valid(3 * 20);
  std::mt19937_64 rng(13);
  for (auto& v : valid) v = rng() % 4 != 0;
  WeightVolume<double> wv;
  wv.weights = w;
  wv.validity = valid;
  double expect = 0;
  for (std::size_t m = 0; m < 3; ++m) {
    double sx = 0, sy = 0;
    std::size_t nx = 0, ny = 0;
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        const std::size_t i = (m * 4 + y) * 5 + x;
        if (x + 1 < 5 && valid[i] && valid[i + 1]) {
          sx += std::abs(w.data()[i + 1] - w.data()[i]);
          ++nx;
        }
        if (y + 1 < 4 && valid[i] && valid[i + 5]) {
          sy += std::abs(w.data()[i + 5] - w.data()[i]);
          ++ny;
        }
      }
    if (nx) expect += sx / double(nx);
    if (ny) expect += sy / double(ny);
  }
  EXPECT_NEAR(weight_smoothness<double>({wv}).item(), expect, 1e-6);
}

TEST(Smoothness, GradMatchesFiniteDifference) {
  auto w = random_image<double>({2, 4, 4}, 14);
  w.set_requires_grad(true);
  std::vector<std::uint8_t> valid(32, 1);
  auto res = gradcheck(
      [&] { return weight_smoothness_term(w, valid); }, {w}, 1e-6, 12);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(TotalLoss, CompositionAndLambda) {
  auto r = Td::scalar(0.4), s = Td::scalar(0.05), w = Td::scalar(2.0);
  auto t = total_loss<double>(r, s, w, 0.01);
  EXPECT_NEAR(t.report.total, 0.47, 1e-12);
  EXPECT_NEAR(t.value.item(), 0.47, 1e-12);
  EXPECT_FALSE(t.report.perceptual.has_value());

  auto t0 = total_loss<double>(r, s, Td::scalar(123.0), 0.0);
  EXPECT_NEAR(t0.report.total, 0.45, 1e-12);

  EXPECT_THROW(total_loss<double>(r, s, w, -0.1), ConfigError);
}

TEST(TotalLoss, GradReachesWeightLogits) {
  NeighborhoodIndex nbr;
  nbr.height = nbr.width = 2;
  nbr.src_height = nbr.src_width = 4;
  nbr.M = 2;
  nbr.xs = {0, 1, 2, 3, 1, 2, 3, 0};
  nbr.ys = {0, 0, 1, 1, 2, 2, 3, 3};
  nbr.valid.assign(8, 1);
  nbr.valid_count.assign(4, 2);
  auto logits = random_image<double>({8, 1}, 15, -1.0, 1.0);
  logits.set_requires_grad(true);
  auto forward = [&] {
    WeightVolume<double> wv;
    wv.weight_rows = masked_softmax_rows(logits, nbr);
    wv.weights = reshape(wv.weight_rows, {2, 2, 2});
    wv.validity = nbr.valid;
    auto smooth = weight_smoothness<double>({wv});
    return total_loss<double>(Td::scalar(0.1), Td::scalar(0.2), smooth, 0.01)
        .value;
  };
  auto res = gradcheck(forward, {logits}, 1e-6);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(LossCsv, AppendsHeaderOnceAndRows) {
  const std::string path = ::testing::TempDir() + "loss.csv";
  std::remove(path.c_str());
  LossReport<double> r;
  r.recon = 0.5;
  r.ssim_loss = 0.1;
  r.weight_smooth = 2.0;
  r.total = 0.62;
  append_loss_csv(path, 0, r);
  append_loss_csv(path, 1, r);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "step,recon,ssim_loss,weight_smooth,total");
  std::getline(f, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  std::getline(f, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
}
