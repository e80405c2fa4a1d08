#pragma once

// The finite-difference verification suite behind the gradcheck subcommand:
// elementary ops at 1e-4, the full pipeline at 1e-3, all in 64-bit.

#include "epiwarp/gradcheck.hpp"
#include "epiwarp/model.hpp"

namespace epiwarp {

struct GradcheckEntry {
  std::string name;
  double rel_err = 0;
  double threshold = 0;
  bool pass() const { return rel_err < threshold; }
};

inline std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed = 1) {
  using Td = Tensor<double>;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.1, 1.0);
  auto rand_t = [&](Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = uni(rng);
    Td t = Td::from(shape, std::move(v));
    t.set_requires_grad(true);
    return t;
  };
  std::vector<GradcheckEntry> out;
  auto check = [&](const std::string& name, double threshold, auto&& forward,
                   std::vector<Td> leaves, std::size_t probes = 0) {
    auto res = gradcheck(forward, std::move(leaves), 1e-5, probes);
    out.push_back({name, res.max_rel_err, threshold});
  };

  {
    auto a = rand_t({3, 4}), b = rand_t({3, 4});
    check("elementwise mul", 1e-4,
          [&] { return sum_all(mul(a, b)); }, {a, b});
    check("elementwise div", 1e-4,
          [&] { return sum_all(div(a, b)); }, {a, b});
    check("leaky relu", 1e-4,
          [&] { return sum_all(leaky_relu(sub(a, b))); }, {a, b});
  }
  {
    auto a = rand_t({3, 5}), b = rand_t({5, 2});
    check("matmul", 1e-4,
          [&] { return sum_all(square(matmul(a, b))); }, {a, b});
  }
  {
    auto x = rand_t({2, 5, 5}), k = rand_t({3, 2, 3, 3}), b = rand_t({3});
    check("conv2d", 1e-4,
          [&] { return sum_all(square(conv2d(x, k, b))); }, {x, k, b}, 8);
  }
  {
    auto a = rand_t({4, 3});
    check("softmax", 1e-4,
          [&] { return sum_all(square(softmax(a, 1))); }, {a});
    check("reduce variance", 1e-4,
          [&] { return sum_all(variance(a, 0)); }, {a});
  }
  {
    auto img = rand_t({1, 4, 4});
    std::vector<double> cv;
    for (std::size_t i = 0; i < 4; ++i) cv.push_back(0.3 + 0.55 * uni(rng) + i % 2);
    for (std::size_t i = 0; i < 4; ++i) cv.push_back(0.3 + 0.55 * uni(rng) + i / 2);
    auto coords = Td::from({2, 2, 2}, std::move(cv));
    coords.set_requires_grad(true);
    check("bilinear sample", 1e-4,
          [&] { return sum_all(square(bilinear_sample(img, coords).image)); },
          {img, coords});
  }
  {
    auto a = rand_t({1, 12, 12}), b = rand_t({1, 12, 12});
    check("ssim", 1e-4, [&] { return ssim_loss(a, b); }, {a, b}, 10);
  }

  // end-to-end: 8x8, N=2, M=8, D=4
  {
    RunConfig cfg;
    cfg.neighborhood = 8;
    cfg.psv_layers = 4;
    cfg.c_ctt = 2;
    cfg.fc_width = 3;
    cfg.fc_blocks = 1;
    cfg.fw_width = 6;
    cfg.fb_width = 6;
    cfg.fv_width = 4;
    cfg.c_g = 3;
    cfg.unet_width = 2;
    cfg.fr_width = 4;
    cfg.fr_blocks = 1;
    cfg.seed = seed;
    EpiWarpModel<double> model(cfg);
    auto sample = render<double>(two_plane_scene(seed, 8, 8, 4.0));
    auto nbrs = model.neighborhoods(sample);
    auto forward = [&] {
      auto fwd = model.forward(sample, nbrs);
      Tensor<double> recon =
          recon_loss(fwd.final_image, fwd.intermediate, fwd.warped,
                     sample.target().image, fwd.valid_mask);
      Tensor<double> smooth = weight_smoothness(fwd.weights);
      // SSIM needs an 11x11 window; at 8x8 the remaining terms cover the
      // pipeline end to end
      return add(recon, mul_scalar(smooth, 0.01));
    };
    std::vector<Td> leaves;
    for (auto& [name, p] : model.params.params) leaves.push_back(p);
    auto res = gradcheck(forward, leaves, 1e-5, 2);
    out.push_back({"end-to-end pipeline", res.max_rel_err, 1e-3});
  }
  return out;
}

}  // namespace epiwarp
