#pragma once

// Correspondence and content codes: geometry, spatial, angular, content,
// and global neighborhood statistics, concatenated per neighbor.

#include "epiwarp/nbr_ops.hpp"
#include "epiwarp/nn.hpp"
#include "epiwarp/view.hpp"
#include "epiwarp/warp.hpp"

namespace epiwarp {

struct EmbeddingConfig {
  std::size_t n_views = 2;   // N, source views
  std::size_t c_ctt = 16;    // content code channels
  std::size_t fc_width = 32;
  std::size_t fc_blocks = 3;
  bool light_field = false;  // geo code emits (u, 0)

  std::size_t geo_dim() const { return (n_views - 1) * 2; }
  std::size_t total_dim() const { return geo_dim() + 2 + 6 + 3 * c_ctt; }
};

// concatenation over partners i != s of D_{s,i}; [geo_dim, Hs, Ws]
template <class T>
Tensor<T> geo_field(const View<T>& source, const std::vector<int>& partners,
                    const EmbeddingConfig& cfg) {
  std::vector<Tensor<T>> parts;
  for (int i : partners) {
    auto it = source.disparities.find(i);
    if (it == source.disparities.end())
      throw ConfigError("geo_field: missing disparity map for partner " +
                        std::to_string(i));
    if (cfg.light_field) {
      parts.push_back(slice(it->second, 0, 0, 1));
      parts.push_back(Tensor<T>::zeros({1, source.height(), source.width()}));
    } else {
      parts.push_back(it->second);
    }
  }
  return concat<T>(parts, 0);
}

template <class T>
std::vector<T> geo_code(const View<T>& source, const std::vector<int>& partners,
                        const EmbeddingConfig& cfg, std::size_t xs,
                        std::size_t ys) {
  Tensor<T> f = geo_field(source, partners, cfg);
  const std::size_t HW = source.height() * source.width();
  std::vector<T> code(f.dim(0));
  for (std::size_t c = 0; c < code.size(); ++c)
    code[c] = f.data()[c * HW + ys * source.width() + xs];
  return code;
}

// principal-point-relative offset, normalized by the source extents so the
// code is invariant to patch cropping
inline std::array<double, 2> spa_code(const PixelCoord& xt, const PixelCoord& xs,
                                      const Camera& target, const Camera& source,
                                      std::size_t src_w, std::size_t src_h) {
  return {((xs.x - source.intrinsics.cx) - (xt.x - target.intrinsics.cx)) /
              double(src_w),
          ((xs.y - source.intrinsics.cy) - (xt.y - target.intrinsics.cy)) /
              double(src_h)};
}

inline std::array<double, 6> ang_code(const Pose6DoF& s, const Pose6DoF& t) {
  return {s.tx - t.tx,
          s.ty - t.ty,
          s.tz - t.tz,
          wrap_angle(s.yaw - t.yaw),
          wrap_angle(s.pitch - t.pitch),
          wrap_angle(s.roll - t.roll)};
}

// f_c: residual CNN over [I_s | warped partners | disparities]
template <class T>
struct ContentNet {
  EmbeddingConfig cfg;
  std::size_t channels = 3;
  ResNet<T> net;

  ContentNet() = default;
  ContentNet(ParamStore<T>& store, const EmbeddingConfig& cfg_,
             std::size_t channels_, std::mt19937_64& rng)
      : cfg(cfg_), channels(channels_) {
    const std::size_t cin =
        channels * cfg.n_views + (cfg.n_views - 1) * 2;
    net = ResNet<T>(store, "fc", cin, cfg.fc_width, cfg.c_ctt, cfg.fc_blocks,
                    rng);
  }

  Tensor<T> operator()(const Tensor<T>& image,
                       const std::vector<Tensor<T>>& partners_warped,
                       const std::vector<Tensor<T>>& disparities) const {
    if (partners_warped.size() != cfg.n_views - 1 ||
        disparities.size() != cfg.n_views - 1)
      throw ConfigError("content net: partner count does not match N");
    std::vector<Tensor<T>> parts = {image};
    for (const auto& w : partners_warped) parts.push_back(w);
    for (const auto& d : disparities) parts.push_back(d);
    Tensor<T> x = concat<T>(parts, 0);
    if (x.dim(0) != channels * cfg.n_views + (cfg.n_views - 1) * 2)
      throw ConfigError("content net: input channel count mismatch");
    return net(x);
  }

  // partners backward-warped to the source via its own disparity maps
  Tensor<T> run(const View<T>& source, const std::vector<const View<T>*>& partners,
                const std::vector<int>& partner_ids) const {
    std::vector<Tensor<T>> warped, disps;
    for (std::size_t i = 0; i < partners.size(); ++i) {
      const Tensor<T>& d = source.disparities.at(partner_ids[i]);
      warped.push_back(backward_warp(partners[i]->image, d).image);
      disps.push_back(d);
    }
    return (*this)(source.image, warped, disps);
  }
};

// mean and population variance of the content code over valid neighbors
template <class T>
std::pair<Tensor<T>, Tensor<T>> global_stats(const Tensor<T>& ctt_field,
                                             const NeighborhoodIndex& nbr) {
  std::size_t total_valid = 0;
  for (auto c : nbr.valid_count) total_valid += c;
  if (total_valid == 0)
    throw ContractError("global_stats: neighborhood has no valid entries");
  Tensor<T> rows = gather_rows(ctt_field, nbr);
  return {masked_mean_rows(rows, nbr), masked_variance_rows(rows, nbr)};
}

// per-neighbor rows [M*P, E_total], layout [geo | spa | ang | ctt | mu | nu]
template <class T>
struct EmbeddingBundle {
  Tensor<T> geo, spa, ang, ctt, global_mean, global_var;  // row blocks
  Tensor<T> concatenated;                                 // [M*P, E_total]
};

template <class T>
EmbeddingBundle<T> build_embedding(const View<T>& source, const Camera& target,
                                   const NeighborhoodIndex& nbr,
                                   const Tensor<T>& ctt_field,
                                   const std::vector<int>& partner_ids,
                                   const EmbeddingConfig& cfg,
                                   bool use_global = true) {
  const std::size_t P = nbr.height * nbr.width, M = nbr.M;
  EmbeddingBundle<T> b;
  b.geo = gather_rows(geo_field(source, partner_ids, cfg), nbr);

  std::vector<T> spa(M * P * 2, T(0));
  for (std::size_t r = 0; r < M * P; ++r) {
    if (!nbr.valid[r]) continue;
    const std::size_t p = r % P;
    const PixelCoord xt{double(p % nbr.width), double(p / nbr.width)};
    const PixelCoord xs{double(nbr.xs[r]), double(nbr.ys[r])};
    const auto code = spa_code(xt, xs, target, source.camera, nbr.src_width,
                               nbr.src_height);
    spa[r * 2] = T(code[0]);
    spa[r * 2 + 1] = T(code[1]);
  }
  b.spa = Tensor<T>::from({M * P, 2}, std::move(spa));

  const auto ang =
      ang_code(pose_to_6dof(source.camera.pose), pose_to_6dof(target.pose));
  std::vector<T> angv(M * P * 6);
  for (std::size_t r = 0; r < M * P; ++r)
    for (std::size_t k = 0; k < 6; ++k) angv[r * 6 + k] = T(ang[k]);
  b.ang = Tensor<T>::from({M * P, 6}, std::move(angv));

  b.ctt = gather_rows(ctt_field, nbr);
  if (use_global) {
    auto [mu, nu] = global_stats(ctt_field, nbr);
    b.global_mean = repeat_rows(mu, M);
    b.global_var = repeat_rows(nu, M);
  } else {
    b.global_mean = Tensor<T>::zeros({M * P, cfg.c_ctt});
    b.global_var = Tensor<T>::zeros({M * P, cfg.c_ctt});
  }

  b.concatenated = concat<T>(
      {b.geo, b.spa, b.ang, b.ctt, b.global_mean, b.global_var}, 1);
  if (b.concatenated.dim(1) != cfg.total_dim())
    throw ContractError("build_embedding: E_total mismatch");
  return b;
}

}  // namespace epiwarp
