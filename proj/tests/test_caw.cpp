#include <gtest/gtest.h>

#include <random>

#include "epiwarp/caw.hpp"
#include "epiwarp/gradcheck.hpp"
#include "epiwarp/scene.hpp"

using namespace epiwarp;
using Tf = Tensor<float>;
using Td = Tensor<double>;

namespace {

NeighborhoodIndex grid_nbr(std::size_t H, std::size_t W, std::size_t M,
                           std::size_t src_h, std::size_t src_w,
                           std::vector<std::int32_t> xs,
                           std::vector<std::int32_t> ys,
                           std::vector<std::uint8_t> valid) {
  NeighborhoodIndex nbr;
  nbr.height = H;
  nbr.width = W;
  nbr.src_height = src_h;
  nbr.src_width = src_w;
  nbr.M = M;
  nbr.xs = std::move(xs);
  nbr.ys = std::move(ys);
  nbr.valid = std::move(valid);
  const std::size_t P = H * W;
  nbr.valid_count.assign(P, 0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t p = 0; p < P; ++p)
      nbr.valid_count[p] += nbr.valid[m * P + p];
  return nbr;
}

template <class T>
Mlp<T> small_fw(ParamStore<T>& store, std::size_t e, unsigned seed) {
  std::mt19937_64 rng(seed);
  return Mlp<T>(store, "fw", {e, 8, 8, 1}, rng);
}

}  // namespace

TEST(PredictWeights, IdenticalBundlesGiveUniformWeights) {
  auto nbr = grid_nbr(1, 2, 3, 4, 4, {0, 0, 1, 1, 2, 2}, {0, 0, 0, 0, 0, 0},
                      {1, 1, 1, 1, 1, 0});
  ParamStore<double> store;
  auto fw = small_fw(store, 5, 2);
  std::vector<double> rows(6 * 5);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 5; ++c) rows[r * 5 + c] = 0.3 * double(c);
  auto wv = predict_weights(Td::from({6, 5}, std::move(rows)), nbr, fw);
  // pixel 0 has 3 valid neighbors, pixel 1 has 2
  EXPECT_NEAR(wv.weights.data()[0], 1.0 / 3, 1e-12);
  EXPECT_NEAR(wv.weights.data()[2], 1.0 / 3, 1e-12);
  EXPECT_NEAR(wv.weights.data()[4], 1.0 / 3, 1e-12);
  EXPECT_NEAR(wv.weights.data()[1], 0.5, 1e-12);
  EXPECT_NEAR(wv.weights.data()[3], 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(wv.weights.data()[5], 0.0);
  EXPECT_TRUE(wv.supervisable[0] && wv.supervisable[1]);
}

TEST(PredictWeights, SingleValidNeighborGetsWeightOne) {
  auto nbr = grid_nbr(1, 1, 4, 4, 4, {1, 2, 3, 0}, {0, 0, 0, 0}, {0, 1, 0, 0});
  ParamStore<double> store;
  auto fw = small_fw(store, 3, 5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> rows(4 * 3);
  for (auto& v : rows) v = d(rng);
  auto wv = predict_weights(Td::from({4, 3}, std::move(rows)), nbr, fw);
  EXPECT_DOUBLE_EQ(wv.weights.data()[1], 1.0);
  EXPECT_DOUBLE_EQ(wv.weights.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(wv.weights.data()[2], 0.0);
}

TEST(PredictWeights, AllInvalidPixelIsZeroAndUnsupervisable) {
  auto nbr = grid_nbr(1, 2, 2, 4, 4, {0, 1, 0, 1}, {0, 0, 0, 0}, {1, 0, 1, 0});
  ParamStore<double> store;
  auto fw = small_fw(store, 2, 3);
  auto wv = predict_weights(Td::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), nbr, fw);
  EXPECT_DOUBLE_EQ(wv.weights.data()[1], 0.0);
  EXPECT_DOUBLE_EQ(wv.weights.data()[3], 0.0);
  EXPECT_FALSE(wv.supervisable[1]);
  EXPECT_TRUE(wv.supervisable[0]);
}

TEST(PredictWeights, GradMatchesFiniteDifference) {
  auto nbr = grid_nbr(2, 2, 4, 8, 8,
                      {0, 1, 2, 3, 1, 2, 3, 4, 2, 3, 4, 5, 3, 4, 5, 6},
                      std::vector<std::int32_t>(16, 1),
                      {1, 1, 1, 1, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0});
  ParamStore<double> store;
  auto fw = small_fw(store, 4, 13);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> rows(16 * 4);
  for (auto& v : rows) v = d(rng);
  auto emb = Td::from({16, 4}, std::move(rows));
  std::vector<Td> leaves;
  for (auto& [name, p] : store.params) leaves.push_back(p);
  auto res = gradcheck(
      [&] {
        return sum_all(square(predict_weights(emb, nbr, fw).weight_rows));
      },
      leaves, 1e-5, 8);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(WeightedGather, OneHotSelectsExactly) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> d(0, 1);
  std::vector<float> fv(2 * 4 * 4);
  for (auto& v : fv) v = d(rng);
  auto field = Tf::from({2, 4, 4}, std::move(fv));
  auto nbr = grid_nbr(1, 2, 3, 4, 4, {0, 3, 1, 2, 2, 1}, {1, 2, 0, 3, 2, 1},
                      {1, 1, 1, 1, 1, 1});
  auto w = Tf::from({6, 1}, {0, 0, 0, 1, 1, 0});  // pixel0 -> m2, pixel1 -> m1
  auto out = weighted_gather(field, nbr, w);
  EXPECT_EQ(out.shape(), (Shape{2, 1, 2}));
  for (std::size_t c = 0; c < 2; ++c) {
    // pixel 0 gathers neighbor m2 = (2,2); pixel 1 gathers m1 = (2,3)
    EXPECT_NEAR(out.data()[c * 2 + 0], field.data()[c * 16 + 2 * 4 + 2], 1e-6);
    EXPECT_NEAR(out.data()[c * 2 + 1], field.data()[c * 16 + 3 * 4 + 2], 1e-6);
  }
}

TEST(WeightedGather, UniformWeightsOnConstantFieldGiveConstant) {
  auto field = Tf::filled({1, 4, 4}, 7.0f);
  auto nbr = grid_nbr(1, 1, 3, 4, 4, {0, 1, 2}, {0, 1, 2}, {1, 1, 1});
  auto w = Tf::from({3, 1}, {1.f / 3, 1.f / 3, 1.f / 3});
  auto out = weighted_gather(field, nbr, w);
  EXPECT_NEAR(out.data()[0], 7.0f, 1e-6);
}

TEST(WeightedGather, ConvexCombinationStaysInFieldRange) {
  auto sample = render<double>(two_plane_scene(13, 12, 12, 4.0));
  const auto& src = sample.views[0];
  auto nbr = build_neighborhood(sample.target().camera, src.camera,
                                sample.depth_range, 6, 12, 12, 12, 12);
  ParamStore<double> store;
  auto fw = small_fw(store, 3, 21);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-2, 2);
  std::vector<double> rows(6 * 144 * 3);
  for (auto& v : rows) v = d(rng);
  auto wv = predict_weights(Td::from({6 * 144, 3}, std::move(rows)), nbr, fw);
  auto out = weighted_gather(src.image, nbr, wv.weight_rows);
  const double lo = *std::min_element(src.image.data().begin(),
                                      src.image.data().end());
  const double hi = *std::max_element(src.image.data().begin(),
                                      src.image.data().end());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 144; ++p)
      if (wv.supervisable[p]) {
        EXPECT_GE(out.data()[c * 144 + p], lo - 1e-9);
        EXPECT_LE(out.data()[c * 144 + p], hi + 1e-9);
      }
}

TEST(MaskedSoftmax, ArgmaxInvariantToLogitShift) {
  auto nbr = grid_nbr(1, 1, 3, 4, 4, {0, 1, 2}, {0, 0, 0}, {1, 1, 1});
  auto a = Td::from({3, 1}, {0.2, 1.7, -0.4});
  auto b = Td::from({3, 1}, {0.2 + 5.0, 1.7 + 5.0, -0.4 + 5.0});
  auto wa = masked_softmax_rows(a, nbr);
  auto wb = masked_softmax_rows(b, nbr);
  for (std::size_t m = 0; m < 3; ++m)
    EXPECT_NEAR(wa.data()[m], wb.data()[m], 1e-12);
}

TEST(Caw, IdentityGeometryReproducesSource) {
  auto sample = render<float>(two_plane_scene(9, 10, 10, 4.0));
  const auto& src = sample.views[0];
  auto nbr = build_neighborhood(src.camera, src.camera, sample.depth_range, 4,
                                10, 10, 10, 10);
  EmbeddingConfig cfg;
  std::mt19937_64 rng(8);
  ParamStore<float> store;
  ContentNet<float> cnet(store, cfg, 3, rng);
  auto ctt = cnet.run(src, {&sample.views[1]}, {1});
  auto bundle = build_embedding(src, src.camera, nbr, ctt, {1}, cfg);
  Mlp<float> fw(store, "fw", {cfg.total_dim(), 16, 1}, rng);
  auto res = content_aware_warp(src, nbr, bundle, fw);
  EXPECT_EQ(res.image.data(), src.image.data());
}

TEST(Caw, CraftedWeightsMatchBilinearWarp) {
  // constant sub-pixel disparity: bilinear mass on the two straddling
  // integer neighbors must reproduce classic backward warping
  auto sample = render<double>(one_plane_scene(15, 16, 16, 2.5));
  const auto& src = sample.views[0];
  const auto& tgt = sample.target();
  auto nbr = build_neighborhood(tgt.camera, src.camera,
                                {sample.depth_range.d_min / 2,
                                 sample.depth_range.d_max * 2},
                                9, 16, 16, 16, 16);
  const auto& flow = tgt.disparities.at(0);
  const std::size_t P = 256;
  std::vector<double> w(9 * P, 0.0);
  std::vector<std::uint8_t> covered(P, 0);
  for (std::size_t p = 0; p < P; ++p) {
    const double sx = double(p % 16) + double(flow.data()[p]);
    const double sy = double(p / 16) + double(flow.data()[P + p]);
    ASSERT_NEAR(sy, std::round(sy), 1e-9);  // rectified
    const int x0 = int(std::floor(sx)), x1 = x0 + 1;
    const double a = sx - std::floor(sx);
    int m0 = -1, m1 = -1;
    for (std::size_t m = 0; m < 9; ++m) {
      if (!nbr.valid[m * P + p]) continue;
      if (nbr.xs[m * P + p] == x0 && nbr.ys[m * P + p] == std::lround(sy))
        m0 = int(m);
      if (nbr.xs[m * P + p] == x1 && nbr.ys[m * P + p] == std::lround(sy))
        m1 = int(m);
    }
    if (m0 < 0 || m1 < 0) continue;
    w[std::size_t(m0) * P + p] = 1.0 - a;
    w[std::size_t(m1) * P + p] = a;
    covered[p] = 1;
  }
  std::size_t ncov = 0;
  for (auto c : covered) ncov += c;
  ASSERT_GT(ncov, P / 2);

  auto gathered = weighted_gather(src.image, nbr,
                                  Td::from({9 * P, 1}, std::move(w)));
  auto classic = backward_warp(src.image, flow);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (covered[p] && classic.valid[p])
        EXPECT_NEAR(gathered.data()[c * P + p],
                    classic.image.data()[c * P + p], 1e-5);
}

TEST(Caw, SharedWeightsBetweenImageAndEmbeddingGathers) {
  auto sample = render<double>(two_plane_scene(4, 8, 8, 4.0));
  const auto& src = sample.views[0];
  auto nbr = build_neighborhood(sample.target().camera, src.camera,
                                sample.depth_range, 5, 8, 8, 8, 8);
  EmbeddingConfig cfg;
  std::mt19937_64 rng(10);
  ParamStore<double> store;
  ContentNet<double> cnet(store, cfg, 3, rng);
  auto ctt = cnet.run(src, {&sample.views[1]}, {1});
  auto bundle = build_embedding(src, sample.target().camera, nbr, ctt, {1}, cfg);
  Mlp<double> fw(store, "fw", {cfg.total_dim(), 16, 16, 16, 1}, rng);
  auto res = content_aware_warp(src, nbr, bundle, fw);
  // rebuild the embedding gather from the published weights: must agree
  auto manual =
      weighted_sum_rows(bundle.concatenated, res.weights.weight_rows, 5);
  EXPECT_EQ(res.embedding.data(), manual.data());
  EXPECT_EQ(res.embedding.shape(), (Shape{64, cfg.total_dim()}));
}

TEST(Caw, WeightVolumeDumpRoundTrips) {
  auto nbr = grid_nbr(2, 2, 2, 4, 4, {0, 1, 1, 2, 2, 3, 3, 0},
                      {0, 0, 1, 1, 2, 2, 3, 3}, std::vector<std::uint8_t>(8, 1));
  ParamStore<float> store;
  auto fw = small_fw(store, 2, 30);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> d(-1, 1);
  std::vector<float> rows(8 * 2);
  for (auto& v : rows) v = d(rng);
  auto wv = predict_weights(Tf::from({8, 2}, std::move(rows)), nbr, fw);
  const std::string prefix = ::testing::TempDir() + "wv";
  dump_weight_volume(prefix, wv);
  auto slice0 = read_pfm<float>(prefix + "_00.pfm");
  EXPECT_EQ(slice0.shape(), (Shape{1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_FLOAT_EQ(slice0.data()[i], wv.weights.data()[i]);
}
