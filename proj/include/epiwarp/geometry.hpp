#pragma once

// Cameras, poses, the source<->target coordinate relation, fundamental
// matrices, and epipolar neighborhood construction. All geometry runs in
// double precision and is immutable after construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>

#include "epiwarp/tensor.hpp"

namespace epiwarp {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

struct Mat3 {
  std::array<double, 9> m{};  // row-major

  static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  double frobenius() const {
    double s = 0;
    for (double v : m) s += v * v;
    return std::sqrt(s);
  }
};

inline Mat3 skew(const Vec3& t) {
  return {{0, -t.z, t.y, t.z, 0, -t.x, -t.y, t.x, 0}};
}

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (fx <= 0 || fy <= 0)
      throw ConfigError("camera intrinsics: focal lengths must be positive");
  }
  Mat3 K() const { return {{fx, 0, cx, 0, fy, cy, 0, 0, 1}}; }
  Mat3 Kinv() const {
    return {{1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1}};
  }
};

// world-to-camera: x_cam = R * X + t
struct CameraPose {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  void validate() const {
    Mat3 rrt = rotation * rotation.transposed();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(rrt(i, j) - (i == j ? 1.0 : 0.0)) > 1e-6)
          throw ConfigError("camera pose: rotation is not orthonormal");
    if (std::abs(rotation.det() - 1.0) > 1e-6)
      throw ConfigError("camera pose: rotation determinant is not +1");
  }
  Vec3 center() const {
    // C = -R^T t
    return rotation.transposed() * (translation * -1.0);
  }
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2 * M_PI);
  if (a < 0) a += 2 * M_PI;
  double w = a - M_PI;
  // wrap into (-pi, pi]
  return w == -M_PI ? M_PI : w;
}

struct Pose6DoF {
  double tx = 0, ty = 0, tz = 0;
  double yaw = 0, pitch = 0, roll = 0;  // Z-Y-X Euler, radians
  bool degenerate = false;              // gimbal lock flag
};

// Euler convention Z-Y-X: R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 rz = {{cy, -sy, 0, sy, cy, 0, 0, 0, 1}};
  Mat3 ry = {{cp, 0, sp, 0, 1, 0, -sp, 0, cp}};
  Mat3 rx = {{1, 0, 0, 0, cr, -sr, 0, sr, cr}};
  return rz * ry * rx;
}

inline Pose6DoF pose_to_6dof(const CameraPose& pose) {
  Pose6DoF p;
  p.tx = pose.translation.x;
  p.ty = pose.translation.y;
  p.tz = pose.translation.z;
  const Mat3& R = pose.rotation;
  const double sp = -R(2, 0);
  if (std::abs(sp) > 1.0 - 1e-9) {
    // gimbal lock: yaw absorbs roll by convention, roll := 0
    p.degenerate = true;
    p.pitch = sp > 0 ? M_PI / 2 : -M_PI / 2;
    p.roll = 0;
    p.yaw = wrap_angle(std::atan2(-R(0, 1), R(1, 1)));
  } else {
    p.pitch = std::asin(sp);
    p.yaw = wrap_angle(std::atan2(R(1, 0), R(0, 0)));
    p.roll = wrap_angle(std::atan2(R(2, 1), R(2, 2)));
  }
  return p;
}

struct PixelCoord {
  double x = 0, y = 0;
};

struct Projection {
  double x = 0, y = 0;
  bool in_front = true;  // third homogeneous component > 0
};

// x'_t = K_s (R_s R_t^T d K_t^-1 x_t + t_s - R_s R_t^T t_t), dehomogenized.
inline Projection project(const PixelCoord& xt, double d, const Camera& target,
                          const Camera& source) {
  if (d <= 0) throw ContractError("project: depth must be positive");
  const Mat3 rel = source.pose.rotation * target.pose.rotation.transposed();
  const Vec3 ray = target.intrinsics.Kinv() * Vec3{xt.x, xt.y, 1.0};
  const Vec3 cam =
      rel * (ray * d) + source.pose.translation - rel * target.pose.translation;
  const Vec3 h = source.intrinsics.K() * cam;
  Projection p;
  p.in_front = h.z > 0;
  if (p.in_front) {
    p.x = h.x / h.z;
    p.y = h.y / h.z;
  }
  return p;
}

// Same relation parameterized by inverse depth; inv = 0 projects the point
// at infinity, which keeps the PSV/neighborhood sampling well defined for
// unbounded depth ranges.
inline Projection project_invdepth(const PixelCoord& xt, double inv,
                                   const Camera& target, const Camera& source) {
  if (inv < 0) throw ContractError("project_invdepth: negative inverse depth");
  const Mat3 rel = source.pose.rotation * target.pose.rotation.transposed();
  const Vec3 ray = target.intrinsics.Kinv() * Vec3{xt.x, xt.y, 1.0};
  const Vec3 trel =
      source.pose.translation - rel * target.pose.translation;
  const Vec3 h = source.intrinsics.K() * (rel * ray + trel * inv);
  Projection p;
  p.in_front = h.z > 0;
  if (p.in_front) {
    p.x = h.x / h.z;
    p.y = h.y / h.z;
  }
  return p;
}

// Fundamental matrix with the convention x_s^T F x_t = 0, normalized to
// unit Frobenius norm.
inline Mat3 fundamental_matrix(const Camera& target, const Camera& source) {
  const Vec3 ct = target.pose.center(), cs = source.pose.center();
  if ((ct - cs).norm() < 1e-12)
    throw ConfigError("fundamental_matrix: camera centers coincide");
  const Mat3 rel = source.pose.rotation * target.pose.rotation.transposed();
  const Vec3 trel =
      source.pose.translation - rel * target.pose.translation;
  const Mat3 E = skew(trel) * rel;
  Mat3 F = source.intrinsics.Kinv().transposed() * E * target.intrinsics.Kinv();
  const double n = F.frobenius();
  for (auto& v : F.m) v /= n;
  return F;
}

inline double epipolar_residual(const Mat3& F, const PixelCoord& xs,
                                const PixelCoord& xt) {
  const Vec3 line = F * Vec3{xt.x, xt.y, 1.0};
  const double v = line.x * xs.x + line.y * xs.y + line.z;
  const double n = std::hypot(line.x, line.y);
  // point-to-line distance in pixels
  return n > 0 ? std::abs(v) / n : std::abs(v);
}

// Per-target-pixel ordered list of integer source coordinates along the
// epipolar segment induced by the depth range. Fixed length M; entries
// past the deduplicated samples carry valid = 0.
struct NeighborhoodIndex {
  std::size_t height = 0, width = 0;        // target grid
  std::size_t src_height = 0, src_width = 0;
  std::size_t M = 0;
  std::vector<std::int32_t> xs;             // [M * H * W]
  std::vector<std::int32_t> ys;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint16_t> valid_count;   // [H * W]

  std::size_t entry(std::size_t m, std::size_t y, std::size_t x) const {
    return (m * height + y) * width + x;
  }
};

struct DepthRange {
  double d_min = 0, d_max = 0;
};

// Samples M depths uniformly in inverse depth, projects, rounds to integer
// pixels, deduplicates preserving order, and pads with invalid entries.
inline void epipolar_neighborhood_entry(const PixelCoord& xt,
                                        const Camera& target,
                                        const Camera& source,
                                        const DepthRange& range, std::size_t M,
                                        std::size_t src_w, std::size_t src_h,
                                        std::int32_t* out_x, std::int32_t* out_y,
                                        std::uint8_t* out_valid,
                                        std::size_t stride) {
  if (range.d_min <= 0 || range.d_min >= range.d_max)
    throw ConfigError("epipolar neighborhood: need 0 < d_min < d_max");
  if (M < 2) throw ConfigError("epipolar neighborhood: M >= 2 required");
  const double inv_min = std::isinf(range.d_max) ? 0.0 : 1.0 / range.d_max;
  const double inv_max = 1.0 / range.d_min;
  std::size_t count = 0;
  std::int32_t last_x = 0, last_y = 0;
  for (std::size_t m = 0; m < M; ++m) {
    const double inv = inv_min + (inv_max - inv_min) * double(m) / double(M - 1);
    const Projection p = project_invdepth(xt, inv, target, source);
    if (!p.in_front) continue;
    const auto ix = std::int32_t(std::lround(p.x));
    const auto iy = std::int32_t(std::lround(p.y));
    if (ix < 0 || iy < 0 || ix >= std::int32_t(src_w) || iy >= std::int32_t(src_h))
      continue;
    if (count > 0 && ix == last_x && iy == last_y) continue;
    out_x[count * stride] = ix;
    out_y[count * stride] = iy;
    out_valid[count * stride] = 1;
    last_x = ix;
    last_y = iy;
    ++count;
  }
  for (std::size_t m = count; m < M; ++m) {
    out_x[m * stride] = 0;
    out_y[m * stride] = 0;
    out_valid[m * stride] = 0;
  }
}

// Builds the full index for a target grid. An offset shifts target pixel
// coordinates (used by patch cropping).
inline NeighborhoodIndex build_neighborhood(const Camera& target,
                                            const Camera& source,
                                            const DepthRange& range,
                                            std::size_t M, std::size_t tgt_w,
                                            std::size_t tgt_h, std::size_t src_w,
                                            std::size_t src_h) {
  NeighborhoodIndex idx;
  idx.height = tgt_h;
  idx.width = tgt_w;
  idx.src_height = src_h;
  idx.src_width = src_w;
  idx.M = M;
  const std::size_t P = tgt_h * tgt_w;
  idx.xs.assign(M * P, 0);
  idx.ys.assign(M * P, 0);
  idx.valid.assign(M * P, 0);
  idx.valid_count.assign(P, 0);
  for (std::size_t y = 0; y < tgt_h; ++y)
    for (std::size_t x = 0; x < tgt_w; ++x) {
      const std::size_t p = y * tgt_w + x;
      epipolar_neighborhood_entry({double(x), double(y)}, target, source, range,
                                  M, src_w, src_h, idx.xs.data() + p,
                                  idx.ys.data() + p, idx.valid.data() + p, P);
      std::uint16_t c = 0;
      for (std::size_t m = 0; m < M; ++m) c += idx.valid[m * P + p];
      idx.valid_count[p] = c;
    }
  return idx;
}

// Light-field disparity rescaling: views on a scanline, flow known between
// source and one partner, scaled to a different partner by position ratio.
template <class T>
Tensor<T> scale_lf_disparity(const Tensor<T>& flow, double pos_source,
                             double pos_partner, double pos_target) {
  if (std::abs(pos_partner - pos_source) < 1e-12)
    throw ConfigError("scale_lf_disparity: coincident view positions");
  const T s = T((pos_target - pos_source) / (pos_partner - pos_source));
  return mul_scalar(flow, s);
}

// ---------------------------------------------------------------------------
// camera text format: one camera per block, 9 K entries, 9 R entries,
// 3 t entries, row-major, whitespace-separated

inline void write_camera_text(std::ostream& os, const Camera& cam) {
  os.precision(17);
  const Mat3 K = cam.intrinsics.K();
  for (int i = 0; i < 9; ++i) os << K.m[i] << (i % 3 == 2 ? "\n" : " ");
  for (int i = 0; i < 9; ++i)
    os << cam.pose.rotation.m[i] << (i % 3 == 2 ? "\n" : " ");
  os << cam.pose.translation.x << " " << cam.pose.translation.y << " "
     << cam.pose.translation.z << "\n";
}

inline Camera read_camera_text(std::istream& is) {
  std::array<double, 21> v{};
  for (auto& x : v)
    if (!(is >> x)) throw DataError("camera file: expected 21 numeric entries");
  if (v[1] != 0 || v[3] != 0 || v[6] != 0 || v[7] != 0 || v[8] != 1)
    throw DataError("camera file: K is not an upper-triangular intrinsic matrix");
  Camera cam;
  cam.intrinsics = CameraIntrinsics(v[0], v[4], v[2], v[5]);
  for (int i = 0; i < 9; ++i) cam.pose.rotation.m[i] = v[9 + i];
  cam.pose.translation = {v[18], v[19], v[20]};
  cam.pose.validate();
  return cam;
}

}  // namespace epiwarp
