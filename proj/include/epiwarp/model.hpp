#pragma once

// The full pipeline: content embedding, content-aware warping per source,
// confidence blending, PSV fusion, feature-space warping, and residual
// refinement, with a bypass for every ablation flag.

#include "epiwarp/checkpoint.hpp"
#include "epiwarp/config.hpp"
#include "epiwarp/loss.hpp"
#include "epiwarp/refine.hpp"
#include "epiwarp/scene.hpp"

namespace epiwarp {

template <class T>
struct ForwardResult {
  std::vector<Tensor<T>> warped;       // per source, [C,H,W]
  std::vector<WeightVolume<T>> weights;
  ConfidenceVolume<T> confidence;
  Tensor<T> intermediate;              // [C,H,W]
  Tensor<T> final_image;               // [C,H,W]
  Tensor<T> valid_mask;                // [H,W], supervisable everywhere used
};

template <class T>
struct EpiWarpModel {
  RunConfig cfg;
  EmbeddingConfig ecfg;
  RefineConfig rcfg;
  ParamStore<T> params;
  ContentNet<T> fc;
  Mlp<T> fw, fb;
  PsvFusion<T> fv;
  FeatureEncoder<T> fg;
  RefineNet<T> fr;

  explicit EpiWarpModel(const RunConfig& cfg_) : cfg(cfg_) {
    cfg.check();
    ecfg.n_views = cfg.sources;
    ecfg.c_ctt = cfg.c_ctt;
    ecfg.fc_width = cfg.fc_width;
    ecfg.fc_blocks = cfg.fc_blocks;
    ecfg.light_field = cfg.mode == "lf";
    rcfg.fv_width = cfg.fv_width;
    rcfg.c_g = cfg.c_g;
    rcfg.unet_width = cfg.unet_width;
    rcfg.fr_width = cfg.fr_width;
    rcfg.fr_blocks = cfg.fr_blocks;
    // all submodules are always constructed so checkpoints stay layout
    // compatible across ablation flags
    std::mt19937_64 rng(cfg.seed);
    fc = ContentNet<T>(params, ecfg, cfg.channels, rng);
    fw = Mlp<T>(params, "fw",
                {ecfg.total_dim(), cfg.fw_width, cfg.fw_width, cfg.fw_width, 1},
                rng);
    fb = Mlp<T>(params, "fb",
                {2 * ecfg.total_dim(), cfg.fb_width, cfg.fb_width, 1}, rng);
    fv = PsvFusion<T>(params, rcfg, cfg.channels, rng);
    fg = FeatureEncoder<T>(params, rcfg, cfg.channels, rng);
    fr = RefineNet<T>(params, rcfg, cfg.channels, cfg.sources, rng);
  }

  std::vector<NeighborhoodIndex> neighborhoods(
      const RenderedSample<T>& sample) const {
    const View<T>& tgt = sample.target();
    std::vector<NeighborhoodIndex> nbrs;
    for (std::size_t s : sample.source_indices())
      nbrs.push_back(build_neighborhood(
          tgt.camera, sample.views[s].camera, sample.depth_range,
          cfg.neighborhood, tgt.width(), tgt.height(),
          sample.views[s].width(), sample.views[s].height()));
    return nbrs;
  }

  ForwardResult<T> forward(const RenderedSample<T>& sample,
                           const std::vector<NeighborhoodIndex>& nbrs) const {
    const View<T>& tgt = sample.target();
    const auto srcs = sample.source_indices();
    if (srcs.size() != cfg.sources)
      throw ConfigError("model: sample source count does not match config");
    const std::size_t H = tgt.height(), W = tgt.width();

    ForwardResult<T> out;
    std::vector<Tensor<T>> embeds;
    for (std::size_t i = 0; i < srcs.size(); ++i) {
      const View<T>& src = sample.views[srcs[i]];
      std::vector<int> partner_ids;
      std::vector<const View<T>*> partners;
      for (std::size_t j = 0; j < srcs.size(); ++j)
        if (j != i) {
          partner_ids.push_back(int(srcs[j]));
          partners.push_back(&sample.views[srcs[j]]);
        }
      if (partner_ids.empty()) {
        partner_ids.push_back(int(srcs[i]));  // N=1: self partner, zero flow
        partners.push_back(&src);
      }
      Tensor<T> ctt =
          cfg.content_embedding
              ? fc.run(src, partners, partner_ids)
              : Tensor<T>::zeros({cfg.c_ctt, src.height(), src.width()});
      auto bundle = build_embedding(src, tgt.camera, nbrs[i], ctt, partner_ids,
                                    ecfg,
                                    cfg.content_embedding && cfg.global_embedding);
      auto caw = content_aware_warp(src, nbrs[i], bundle, fw);
      out.warped.push_back(caw.image);
      out.weights.push_back(caw.weights);
      embeds.push_back(caw.embedding);
    }
    out.confidence = confidence_net_fb(embeds, fb, H, W);
    out.intermediate = blend(out.warped, out.confidence);

    std::vector<FusedPsvFeature<T>> fused;
    std::vector<Tensor<T>> aligned;
    for (std::size_t i = 0; i < srcs.size(); ++i) {
      if (cfg.psv_fusion) {
        auto psv = build_psv(sample.views[srcs[i]], tgt.camera,
                             sample.depth_range, cfg.psv_layers, H, W);
        fused.push_back(fv(out.intermediate, psv));
      } else {
        fused.push_back({Tensor<T>::zeros({cfg.fv_width, H, W}), Tensor<T>()});
      }
      aligned.push_back(
          cfg.feature_warp
              ? feature_space_warp(fg(sample.views[srcs[i]].image), nbrs[i],
                                   out.weights[i])
              : Tensor<T>::zeros({cfg.c_g, H, W}));
    }
    out.final_image = fr(out.intermediate, fused, aligned);

    std::vector<T> mask(H * W, T(1));
    for (const auto& wv : out.weights)
      for (std::size_t p = 0; p < H * W; ++p)
        if (!wv.supervisable[p]) mask[p] = T(0);
    if (tgt.validity.defined())
      for (std::size_t p = 0; p < H * W; ++p)
        if (tgt.validity.data()[p] == T(0)) mask[p] = T(0);
    out.valid_mask = Tensor<T>::from({H, W}, std::move(mask));
    return out;
  }

  ForwardResult<T> forward(const RenderedSample<T>& sample) const {
    return forward(sample, neighborhoods(sample));
  }

  TotalLoss<T> compute_loss(const ForwardResult<T>& fwd,
                            const RenderedSample<T>& sample) const {
    const Tensor<T>& gt = sample.target().image;
    Tensor<T> recon = recon_loss(fwd.final_image, fwd.intermediate, fwd.warped,
                                 gt, fwd.valid_mask);
    Tensor<T> s = ssim_loss(fwd.final_image, gt);
    Tensor<T> smooth = cfg.weight_smoothness ? weight_smoothness(fwd.weights)
                                             : Tensor<T>::zeros({1});
    return total_loss(recon, s, smooth,
                      cfg.weight_smoothness ? cfg.lambda : 0.0);
  }

  void save(const std::string& path) const { save_checkpoint(path, params); }
  void load(const std::string& path) { load_checkpoint(path, params); }
};

}  // namespace epiwarp
