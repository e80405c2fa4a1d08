#pragma once

// Procedural Lambertian scenes with exact ground truth: fronto-parallel
// textured planes rendered by per-pixel ray intersection, analytic
// disparity maps, and brute-force occlusion masks. These scenes are the
// verification oracle for the learned pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "epiwarp/geometry.hpp"
#include "epiwarp/image_io.hpp"
#include "epiwarp/view.hpp"

namespace epiwarp {

struct WorldRect {
  double x0 = -1e9, y0 = -1e9, x1 = 1e9, y1 = 1e9;
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct PlaneSpec {
  double depth = 0;        // world z of the fronto-parallel plane
  std::uint64_t seed = 0;  // texture seed
  WorldRect rect;          // finite extent; defaults to effectively infinite
};

struct SceneSpec {
  std::vector<PlaneSpec> planes;
  std::vector<Camera> cameras;
  std::size_t target_index = 0;
  std::size_t height = 0, width = 0;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  double texture_period_px = 32;  // smallest texture period, in pixels

  void check() const {
    if (planes.empty()) throw ConfigError("scene: no planes");
    if (cameras.size() < 2) throw ConfigError("scene: at least 2 cameras");
    if (target_index >= cameras.size())
      throw ConfigError("scene: target index out of range");
    for (std::size_t i = 0; i < planes.size(); ++i) {
      if (planes[i].depth <= 0)
        throw ConfigError("scene: plane depths must be positive");
      for (std::size_t j = i + 1; j < planes.size(); ++j)
        if (planes[i].depth == planes[j].depth)
          throw ConfigError("scene: plane depths must be pairwise distinct");
    }
  }
};

// Band-limited procedural texture: a seeded sum of low-frequency sinusoids
// of world position. Smoothness keeps bilinear resampling consistent across
// views to within ~1e-3.
class PlaneTexture {
 public:
  PlaneTexture(const PlaneSpec& plane, std::size_t channels, double focal,
               double period_px) {
    std::mt19937_64 rng(plane.seed * 0x9e3779b97f4a7c15ULL + 0x6a09e667ULL);
    const double fmax = focal / (period_px * plane.depth);
    std::uniform_real_distribution<double> freq(0.25 * fmax, fmax);
    std::uniform_real_distribution<double> phase(0, 2 * M_PI);
    std::uniform_real_distribution<double> angle(0, M_PI);
    for (std::size_t c = 0; c < channels; ++c)
      for (int k = 0; k < 4; ++k) {
        Component comp;
        const double fr = freq(rng), an = angle(rng);
        comp.fx = fr * std::cos(an);
        comp.fy = fr * std::sin(an);
        comp.phase = phase(rng);
        comp.amp = 0.45 / 4.0;
        components_.push_back(comp);
      }
    channels_ = channels;
  }

  double value(std::size_t c, double x, double y) const {
    double v = 0.5;
    for (int k = 0; k < 4; ++k) {
      const Component& comp = components_[c * 4 + k];
      v += comp.amp *
           std::sin(2 * M_PI * (comp.fx * x + comp.fy * y) + comp.phase);
    }
    return v;
  }

 private:
  struct Component {
    double fx, fy, phase, amp;
  };
  std::vector<Component> components_;
  std::size_t channels_;
};

template <class T>
struct RenderedSample {
  std::vector<View<T>> views;  // all views, including the target
  std::size_t target_index = 0;
  std::vector<Tensor<T>> depth;           // per view, [H,W] camera depth
  std::vector<Tensor<T>> occlusion;       // per view, [H,W]: 1 where the
                                          // target pixel is occluded in it
  DepthRange depth_range;

  View<T>& target() { return views[target_index]; }
  const View<T>& target() const { return views[target_index]; }
  std::vector<std::size_t> source_indices() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < views.size(); ++i)
      if (i != target_index) s.push_back(i);
    return s;
  }
};

namespace detail {

struct RayHit {
  bool hit = false;
  double depth = 0;       // camera-space depth
  double wx = 0, wy = 0;  // world intersection
  std::size_t plane = 0;
};

// nearest-plane intersection of the ray through a (possibly fractional)
// pixel coordinate
inline RayHit trace(const SceneSpec& spec, const Camera& cam, double px,
                    double py) {
  const Vec3 dir =
      cam.pose.rotation.transposed() * (cam.intrinsics.Kinv() * Vec3{px, py, 1});
  const Vec3 C = cam.pose.center();
  RayHit best;
  for (std::size_t pi = 0; pi < spec.planes.size(); ++pi) {
    const PlaneSpec& plane = spec.planes[pi];
    if (std::abs(dir.z) < 1e-12) continue;
    const double d = (plane.depth - C.z) / dir.z;
    if (d <= 0) continue;
    const double wx = C.x + d * dir.x, wy = C.y + d * dir.y;
    if (!plane.rect.contains(wx, wy)) continue;
    if (!best.hit || d < best.depth) {
      best.hit = true;
      best.depth = d;
      best.wx = wx;
      best.wy = wy;
      best.plane = pi;
    }
  }
  return best;
}

}  // namespace detail

template <class T>
RenderedSample<T> render(const SceneSpec& spec) {
  spec.check();
  const std::size_t H = spec.height, W = spec.width, C = spec.channels;
  const double focal = spec.cameras[0].intrinsics.fx;
  for (const Camera& cam : spec.cameras) {
    const double cz = cam.pose.center().z;
    for (const PlaneSpec& p : spec.planes)
      if (std::abs(cz - p.depth) < 1e-9)
        throw ConfigError("scene: camera lies inside a plane");
  }

  std::vector<PlaneTexture> textures;
  for (const PlaneSpec& p : spec.planes)
    textures.emplace_back(p, C, focal, spec.texture_period_px);

  RenderedSample<T> sample;
  sample.target_index = spec.target_index;
  sample.views.resize(spec.cameras.size());
  sample.depth.resize(spec.cameras.size());
  sample.occlusion.resize(spec.cameras.size());

  // render every view + its depth map
  for (std::size_t vi = 0; vi < spec.cameras.size(); ++vi) {
    std::vector<T> img(C * H * W, T(0));
    std::vector<T> dep(H * W, T(0));
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const auto hit =
            detail::trace(spec, spec.cameras[vi], double(x), double(y));
        if (!hit.hit)
          throw ConfigError("scene: ray misses all planes; add a backdrop");
        dep[y * W + x] = T(hit.depth);
        for (std::size_t c = 0; c < C; ++c)
          img[(c * H + y) * W + x] =
              T(textures[hit.plane].value(c, hit.wx, hit.wy));
      }
    sample.views[vi].image = Tensor<T>::from({C, H, W}, std::move(img));
    sample.views[vi].camera = spec.cameras[vi];
    sample.views[vi].validity = Tensor<T>::filled({H, W}, T(1));
    sample.depth[vi] = Tensor<T>::from({H, W}, std::move(dep));
  }

  // analytic pairwise disparity maps from the depth maps
  for (std::size_t a = 0; a < spec.cameras.size(); ++a)
    for (std::size_t b = 0; b < spec.cameras.size(); ++b) {
      if (a == b) continue;
      std::vector<T> flow(2 * H * W, T(0));
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double d = double(sample.depth[a].data()[y * W + x]);
          const Projection p = project({double(x), double(y)}, d,
                                       spec.cameras[a], spec.cameras[b]);
          flow[y * W + x] = T(p.x - double(x));
          flow[(H + y) * W + x] = T(p.y - double(y));
        }
      sample.views[a].disparities[int(b)] =
          Tensor<T>::from({2, H, W}, std::move(flow));
    }

  // occlusion masks: target pixel occluded in view vi iff a nearer plane
  // blocks the sight line from vi to the target's surface point
  const Camera& tcam = spec.cameras[spec.target_index];
  for (std::size_t vi = 0; vi < spec.cameras.size(); ++vi) {
    std::vector<T> occ(H * W, T(0));
    if (vi != spec.target_index) {
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double d = double(sample.depth[spec.target_index].data()[y * W + x]);
          const Projection p =
              project({double(x), double(y)}, d, tcam, spec.cameras[vi]);
          if (!p.in_front) {
            occ[y * W + x] = T(1);
            continue;
          }
          // depth of the same world point in vi's frame
          const Mat3 rel =
              spec.cameras[vi].pose.rotation * tcam.pose.rotation.transposed();
          const Vec3 ray = tcam.intrinsics.Kinv() * Vec3{double(x), double(y), 1};
          const Vec3 cam_v = rel * (ray * d) + spec.cameras[vi].pose.translation -
                             rel * tcam.pose.translation;
          const auto hit = detail::trace(spec, spec.cameras[vi], p.x, p.y);
          if (hit.hit && hit.depth < cam_v.z - 1e-6) occ[y * W + x] = T(1);
        }
    }
    sample.occlusion[vi] = Tensor<T>::from({H, W}, std::move(occ));
  }

  // scene depth range with a small margin
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0;
  for (const auto& dm : sample.depth)
    for (T v : dm.data()) {
      dmin = std::min(dmin, double(v));
      dmax = std::max(dmax, double(v));
    }
  sample.depth_range = {dmin * 0.95, dmax * 1.05};
  return sample;
}

// Crops the target view to a patch; source views are untouched and the
// target camera's principal point shifts so all projections stay valid.
template <class T>
RenderedSample<T> crop_patch_at(const RenderedSample<T>& sample,
                                std::size_t size, std::size_t ox,
                                std::size_t oy) {
  RenderedSample<T> out = sample;
  const std::size_t ti = sample.target_index;
  const View<T>& tv = sample.target();
  const std::size_t H = tv.height(), W = tv.width(), C = tv.channels();
  if (ox + size > W || oy + size > H)
    throw ConfigError("crop_patch: offset out of range");

  auto crop2d = [&](const Tensor<T>& t, std::size_t ch) {
    std::vector<T> v(ch * size * size);
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          v[(c * size + y) * size + x] = t.data()[(c * H + oy + y) * W + ox + x];
    Shape s = ch == 1 && t.rank() == 2 ? Shape{size, size} : Shape{ch, size, size};
    return Tensor<T>::from(s, std::move(v));
  };

  out.views[ti].image = crop2d(tv.image, C);
  out.views[ti].validity = crop2d(tv.validity, 1);
  out.views[ti].camera.intrinsics.cx -= double(ox);
  out.views[ti].camera.intrinsics.cy -= double(oy);
  for (auto& [pi, flow] : out.views[ti].disparities) flow = crop2d(flow, 2);
  // ground-truth depth and occlusion exist only for rendered scenes
  if (sample.depth[ti].defined()) out.depth[ti] = crop2d(sample.depth[ti], 1);
  for (std::size_t vi = 0; vi < sample.views.size(); ++vi)
    if (vi != ti && sample.occlusion[vi].defined())
      out.occlusion[vi] = crop2d(sample.occlusion[vi], 1);
  return out;
}

template <class T>
RenderedSample<T> crop_patch(const RenderedSample<T>& sample, std::size_t size,
                             std::mt19937_64& rng) {
  const std::size_t H = sample.target().height(), W = sample.target().width();
  if (size > H || size > W)
    throw ConfigError("crop_patch: patch size exceeds resolution");
  std::uniform_int_distribution<std::size_t> dy(0, H - size), dx(0, W - size);
  const std::size_t oy = dy(rng), ox = dx(rng);
  return crop_patch_at(sample, size, ox, oy);
}

// Lambertian consistency: for every non-occluded target pixel, the target
// intensity equals the source image bilinearly sampled at the projected
// correspondence. Returns the max abs residual (test oracle).
template <class T>
double lambertian_residual(const RenderedSample<T>& sample) {
  const View<T>& tv = sample.target();
  const std::size_t H = tv.height(), W = tv.width(), C = tv.channels();
  double worst = 0;
  for (std::size_t vi : sample.source_indices()) {
    const View<T>& sv = sample.views[vi];
    const std::size_t sH = sv.height(), sW = sv.width();
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (sample.occlusion[vi].data()[y * W + x] > T(0.5)) continue;
        const double d = double(sample.depth[sample.target_index].data()[y * W + x]);
        const Projection p =
            project({double(x), double(y)}, d, tv.camera, sv.camera);
        if (!p.in_front) continue;
        const double fx = std::floor(p.x), fy = std::floor(p.y);
        if (fx < 0 || fy < 0 || fx + 1 > double(sW - 1) || fy + 1 > double(sH - 1))
          continue;
        const double ax = p.x - fx, ay = p.y - fy;
        const auto x0 = std::size_t(fx), y0 = std::size_t(fy);
        for (std::size_t c = 0; c < C; ++c) {
          auto px = [&](std::size_t yy, std::size_t xx) {
            return double(sv.image.data()[(c * sH + yy) * sW + xx]);
          };
          const double interp =
              (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
              ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
          worst = std::max(
              worst, std::abs(interp - double(tv.image.data()[(c * H + y) * W + x])));
        }
      }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// canned desk-scale scenes

// Rectified camera row: N+1 views on the x axis, sources at the ends,
// target in the middle. Plane depths chosen so the source-to-source
// disparity stays within max_disparity pixels.
inline SceneSpec two_plane_scene(std::uint64_t seed, std::size_t H,
                                 std::size_t W, double max_disparity = 4.0,
                                 std::size_t channels = 3) {
  SceneSpec spec;
  spec.height = H;
  spec.width = W;
  spec.channels = channels;
  spec.seed = seed;
  const double f = 50.0, baseline = 1.0;
  const double d_near = f * baseline / max_disparity;
  const double d_far = 2.0 * d_near;
  // foreground rectangle covering roughly the left half of the frame
  const double span = d_near * double(W) / (2.0 * f);
  PlaneSpec near_plane;
  near_plane.depth = d_near;
  near_plane.seed = seed * 3 + 1;
  near_plane.rect = {-span, -span * 0.6, span * 0.15, span * 0.6};
  PlaneSpec far_plane;
  far_plane.depth = d_far;
  far_plane.seed = seed * 3 + 2;
  spec.planes = {near_plane, far_plane};

  auto cam_at = [&](double x) {
    Camera c;
    c.intrinsics = CameraIntrinsics(f, f, double(W) / 2, double(H) / 2);
    c.pose.rotation = Mat3::identity();
    c.pose.translation = {-x, 0, 0};  // world-to-camera of a camera at (x,0,0)
    return c;
  };
  spec.cameras = {cam_at(0.0), cam_at(baseline), cam_at(baseline / 2)};
  spec.target_index = 2;
  return spec;
}

inline SceneSpec one_plane_scene(std::uint64_t seed, std::size_t H,
                                 std::size_t W, double depth_disparity = 2.0,
                                 std::size_t channels = 3) {
  SceneSpec spec = two_plane_scene(seed, H, W, depth_disparity, channels);
  spec.planes.erase(spec.planes.begin());  // keep only the backdrop
  spec.planes[0].depth = 50.0 / depth_disparity;
  return spec;
}

// ---------------------------------------------------------------------------
// scene directory layout:
//   scene/{view_%02d.png, view_%02d.cam, flow_%02d_%02d.pfm, depthrange.txt}

template <class T>
void save_scene_dir(const std::string& dir, const RenderedSample<T>& sample) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char name[64];
  for (std::size_t vi = 0; vi < sample.views.size(); ++vi) {
    std::snprintf(name, sizeof(name), "/view_%02zu.png", vi);
    write_png(dir + name, sample.views[vi].image);
    std::snprintf(name, sizeof(name), "/view_%02zu.cam", vi);
    std::ofstream cf(dir + name);
    write_camera_text(cf, sample.views[vi].camera);
    for (const auto& [pi, flow] : sample.views[vi].disparities) {
      std::snprintf(name, sizeof(name), "/flow_%02zu_%02d.pfm", vi, pi);
      // (u, v, 0) channels
      Tensor<T> padded = Tensor<T>::zeros({3, flow.dim(1), flow.dim(2)});
      std::copy(flow.data().begin(), flow.data().end(), padded.data().begin());
      write_pfm(dir + name, padded);
    }
  }
  std::ofstream rf(dir + "/depthrange.txt");
  rf.precision(17);
  rf << sample.depth_range.d_min << " " << sample.depth_range.d_max << "\n"
     << "target " << sample.target_index << "\n";
}

template <class T>
RenderedSample<T> load_scene_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  RenderedSample<T> sample;
  char name[64];
  for (std::size_t vi = 0;; ++vi) {
    std::snprintf(name, sizeof(name), "/view_%02zu.png", vi);
    if (!fs::exists(dir + name)) break;
    View<T> v;
    v.image = read_png<T>(dir + name);
    std::snprintf(name, sizeof(name), "/view_%02zu.cam", vi);
    std::ifstream cf(dir + name);
    if (!cf) throw DataError("scene dir: missing camera file " + dir + name);
    v.camera = read_camera_text(cf);
    v.validity = Tensor<T>::filled({v.image.dim(1), v.image.dim(2)}, T(1));
    sample.views.push_back(std::move(v));
  }
  if (sample.views.size() < 2)
    throw DataError("scene dir '" + dir + "': need at least 2 views");
  for (std::size_t a = 0; a < sample.views.size(); ++a)
    for (std::size_t b = 0; b < sample.views.size(); ++b) {
      if (a == b) continue;
      std::snprintf(name, sizeof(name), "/flow_%02zu_%02zu.pfm", a, b);
      if (!fs::exists(dir + name)) continue;
      Tensor<T> padded = read_pfm<T>(dir + name);
      Tensor<T> flow = Tensor<T>::zeros({2, padded.dim(1), padded.dim(2)});
      std::copy(padded.data().begin(),
                padded.data().begin() + std::ptrdiff_t(flow.numel()),
                flow.data().begin());
      sample.views[a].disparities[int(b)] = std::move(flow);
    }
  std::ifstream rf(dir + "/depthrange.txt");
  if (!rf) throw DataError("scene dir '" + dir + "': missing depthrange.txt");
  if (!(rf >> sample.depth_range.d_min >> sample.depth_range.d_max))
    throw DataError("scene dir '" + dir + "': malformed depthrange.txt");
  std::string key;
  if (rf >> key >> sample.target_index; key != "target")
    sample.target_index = sample.views.size() - 1;
  sample.depth.resize(sample.views.size());
  sample.occlusion.resize(sample.views.size());
  return sample;
}

}  // namespace epiwarp
