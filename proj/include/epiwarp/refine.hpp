#pragma once

// Feature-assisted refinement: adaptive PSV fusion, source feature encoding,
// feature-space warping with shared weights, and the residual correction.

#include "epiwarp/blend.hpp"
#include "epiwarp/warp.hpp"

namespace epiwarp {

struct RefineConfig {
  std::size_t fv_width = 64;   // fused feature channels
  std::size_t c_g = 32;        // source feature channels
  std::size_t unet_width = 16;
  std::size_t fr_width = 64;
  std::size_t fr_blocks = 4;
};

template <class T>
struct FusedPsvFeature {
  Tensor<T> feature;        // [fv_width, H, W]
  Tensor<T> layer_weights;  // [D], softmaxed
};

// f_v: 3 convs over [intermediate | PSV layer]; 65th channel becomes the
// per-layer fusion weight
template <class T>
struct PsvFusion {
  RefineConfig cfg;
  Conv3x3<T> conv1, conv2, conv3;

  PsvFusion() = default;
  PsvFusion(ParamStore<T>& store, const RefineConfig& cfg_, std::size_t channels,
            std::mt19937_64& rng)
      : cfg(cfg_),
        conv1(store, "fv.conv1", 2 * channels, cfg_.fv_width, rng),
        conv2(store, "fv.conv2", cfg_.fv_width, cfg_.fv_width, rng),
        conv3(store, "fv.conv3", cfg_.fv_width, cfg_.fv_width + 1, rng) {}

  FusedPsvFeature<T> operator()(const Tensor<T>& intermediate,
                                const PlaneSweepVolume<T>& psv,
                                bool allow_singleton = false) const {
    const std::size_t D = psv.layers.dim(0);
    if (D < 2 && !allow_singleton)
      throw ConfigError("psv fusion: D >= 2 required");
    const std::size_t C = psv.layers.dim(1), H = psv.layers.dim(2),
                      W = psv.layers.dim(3);
    std::vector<Tensor<T>> features, scores;
    for (std::size_t d = 0; d < D; ++d) {
      Tensor<T> layer = reshape(slice(psv.layers, 0, d, 1), {C, H, W});
      Tensor<T> y =
          conv3(leaky_relu(conv2(leaky_relu(conv1(
              concat<T>({intermediate, layer}, 0))))));
      features.push_back(slice(y, 0, 0, cfg.fv_width));
      scores.push_back(mean_all(slice(y, 0, cfg.fv_width, 1)));
    }
    FusedPsvFeature<T> out;
    Tensor<T> w = softmax(reshape(concat<T>(scores, 0),
                                  {std::size_t(1), D}), 1);
    out.layer_weights = reshape(w, {D});
    for (std::size_t d = 0; d < D; ++d) {
      Tensor<T> term = mul(features[d], slice(out.layer_weights, 0, d, 1));
      out.feature = d == 0 ? term : add(out.feature, term);
    }
    return out;
  }
};

template <class T>
struct SourceFeatureMap {
  Tensor<T> feature;  // [c_g, H, W]
};

// f_g: shared 2-scale U-Net encoder for source views
template <class T>
struct FeatureEncoder {
  UNet2<T> net;

  FeatureEncoder() = default;
  FeatureEncoder(ParamStore<T>& store, const RefineConfig& cfg,
                 std::size_t channels, std::mt19937_64& rng)
      : net(store, "fg", channels, cfg.unet_width, cfg.c_g, rng) {}

  SourceFeatureMap<T> operator()(const Tensor<T>& image) const {
    return {net(image)};
  }
};

// reuses the image-space weight volume; never re-predicts
template <class T>
Tensor<T> feature_space_warp(const SourceFeatureMap<T>& gs,
                             const NeighborhoodIndex& nbr,
                             const WeightVolume<T>& wv) {
  if (wv.weights.dim(0) != nbr.M || wv.weights.dim(1) != nbr.height ||
      wv.weights.dim(2) != nbr.width || wv.validity != nbr.valid)
    throw ContractError(
        "feature_space_warp: weight volume does not match neighborhood");
  return weighted_gather(gs.feature, nbr, wv.weight_rows);
}

// f_r: residual CNN; output = f_r(concat inputs) + intermediate
template <class T>
struct RefineNet {
  RefineConfig cfg;
  ResNet<T> net;

  RefineNet() = default;
  RefineNet(ParamStore<T>& store, const RefineConfig& cfg_, std::size_t channels,
            std::size_t n_views, std::mt19937_64& rng)
      : cfg(cfg_) {
    const std::size_t cin =
        channels + n_views * (cfg_.fv_width + cfg_.c_g);
    net = ResNet<T>(store, "fr", cin, cfg_.fr_width, channels, cfg_.fr_blocks,
                    rng);
  }

  Tensor<T> operator()(const Tensor<T>& intermediate,
                       const std::vector<FusedPsvFeature<T>>& fused,
                       const std::vector<Tensor<T>>& aligned) const {
    std::vector<Tensor<T>> parts = {intermediate};
    for (const auto& f : fused) parts.push_back(f.feature);
    for (const auto& a : aligned) parts.push_back(a);
    return add(net(concat<T>(parts, 0)), intermediate);
  }
};

}  // namespace epiwarp
