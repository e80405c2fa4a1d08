#pragma once

// A posed image with per-partner flow maps and a validity mask.

#include <map>

#include "epiwarp/geometry.hpp"
#include "epiwarp/tensor.hpp"

namespace epiwarp {

template <class T>
struct View {
  Tensor<T> image;   // [C,H,W], values in [0,1]
  Camera camera;
  // partner view index -> [2,H,W] flow (u,v) in pixels, evaluated on this
  // view's pixel grid
  std::map<int, Tensor<T>> disparities;
  Tensor<T> validity;  // [H,W] in {0,1}

  std::size_t channels() const { return image.dim(0); }
  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }

  void check() const {
    if (image.rank() != 3 || (channels() != 1 && channels() != 3))
      throw ConfigError("view: image must be [1|3,H,W]");
    for (const auto& [i, d] : disparities)
      if (d.rank() != 3 || d.dim(0) != 2 || d.dim(1) != height() ||
          d.dim(2) != width())
        throw ConfigError("view: disparity map shape mismatch for partner " +
                          std::to_string(i));
    if (validity.defined() &&
        (validity.rank() != 2 || validity.dim(0) != height() ||
         validity.dim(1) != width()))
      throw ConfigError("view: validity mask shape mismatch");
  }
};

}  // namespace epiwarp
