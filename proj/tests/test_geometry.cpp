#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "epiwarp/geometry.hpp"

using namespace epiwarp;

namespace {

Camera make_camera(double fx, double fy, double cx, double cy, Mat3 R, Vec3 t) {
  Camera c;
  c.intrinsics = CameraIntrinsics(fx, fy, cx, cy);
  c.pose.rotation = R;
  c.pose.translation = t;
  return c;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.6, 0.6);
  return rotation_from_euler(d(rng), d(rng) * 0.8, d(rng));
}

}  // namespace

TEST(Project, IdenticalCamerasAreIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0, 63);
  Camera cam = make_camera(50, 50, 32, 32, rotation_from_euler(0.2, -0.1, 0.05),
                           {0.3, -0.2, 0.1});
  for (int i = 0; i < 20; ++i) {
    PixelCoord xt{d(rng), d(rng)};
    for (double depth : {0.5, 2.0, 77.0}) {
      Projection p = project(xt, depth, cam, cam);
      EXPECT_NEAR(p.x, xt.x, 1e-9);
      EXPECT_NEAR(p.y, xt.y, 1e-9);
    }
  }
}

TEST(Project, RectifiedPairShiftsByFocalBaselineOverDepth) {
  const double f = 40, b = 0.5, depth = 4.0;
  Camera target = make_camera(f, f, 16, 16, Mat3::identity(), {0, 0, 0});
  Camera source = make_camera(f, f, 16, 16, Mat3::identity(), {b, 0, 0});
  PixelCoord xt{10, 12};
  Projection p = project(xt, depth, target, source);
  EXPECT_NEAR(p.x, xt.x + f * b / depth, 1e-9);
  EXPECT_NEAR(p.y, xt.y, 1e-9);
}

TEST(Project, RoundTripWithSwappedRoles) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pix(5, 58), dd(2.0, 9.0);
  for (int trial = 0; trial < 30; ++trial) {
    Camera a = make_camera(55, 52, 32, 30, random_rotation(rng),
                           {0.1 * trial, -0.05, 0.02});
    Camera b = make_camera(48, 50, 31, 33, random_rotation(rng), {-0.2, 0.3, 0.1});
    PixelCoord xt{pix(rng), pix(rng)};
    const double depth = dd(rng);
    // depth of the same 3-D point in b's frame
    const Mat3 rel = b.pose.rotation * a.pose.rotation.transposed();
    const Vec3 ray = a.intrinsics.Kinv() * Vec3{xt.x, xt.y, 1.0};
    const Vec3 cam_b =
        rel * (ray * depth) + b.pose.translation - rel * a.pose.translation;
    if (cam_b.z <= 0.1) continue;
    Projection p = project(xt, depth, a, b);
    ASSERT_TRUE(p.in_front);
    Projection back = project({p.x, p.y}, cam_b.z, b, a);
    ASSERT_TRUE(back.in_front);
    EXPECT_NEAR(back.x, xt.x, 1e-6);
    EXPECT_NEAR(back.y, xt.y, 1e-6);
  }
}

TEST(Project, BehindCameraFlagged) {
  Camera target = make_camera(40, 40, 16, 16, Mat3::identity(), {0, 0, 0});
  // source rotated 180 degrees about y looks the other way
  Camera source =
      make_camera(40, 40, 16, 16, rotation_from_euler(0, M_PI, 0), {0, 0, 0.5});
  Projection p = project({16, 16}, 3.0, target, source);
  EXPECT_FALSE(p.in_front);
  EXPECT_THROW(project({16, 16}, -1.0, target, source), ContractError);
}

TEST(Pose6DoF, IdentityIsAllZero) {
  CameraPose pose;
  Pose6DoF p = pose_to_6dof(pose);
  EXPECT_EQ(p.tx, 0);
  EXPECT_EQ(p.ty, 0);
  EXPECT_EQ(p.tz, 0);
  EXPECT_EQ(p.yaw, 0);
  EXPECT_EQ(p.pitch, 0);
  EXPECT_EQ(p.roll, 0);
  EXPECT_FALSE(p.degenerate);
}

TEST(Pose6DoF, PureYaw) {
  CameraPose pose;
  pose.rotation = rotation_from_euler(0.3, 0, 0);
  Pose6DoF p = pose_to_6dof(pose);
  EXPECT_NEAR(p.yaw, 0.3, 1e-12);
  EXPECT_NEAR(p.pitch, 0.0, 1e-12);
  EXPECT_NEAR(p.roll, 0.0, 1e-12);
  // compose-back oracle
  Mat3 r = rotation_from_euler(p.yaw, p.pitch, p.roll);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r.m[i], pose.rotation.m[i], 1e-9);
}

TEST(Pose6DoF, RandomRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    double yaw = d(rng), pitch = d(rng) / 2.2, roll = d(rng);
    CameraPose pose;
    pose.rotation = rotation_from_euler(yaw, pitch, roll);
    Pose6DoF p = pose_to_6dof(pose);
    ASSERT_FALSE(p.degenerate);
    Mat3 r = rotation_from_euler(p.yaw, p.pitch, p.roll);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(r.m[i], pose.rotation.m[i], 1e-9);
  }
}

TEST(Pose6DoF, GimbalLockFlaggedAndRollAbsorbed) {
  CameraPose pose;
  pose.rotation = rotation_from_euler(0.4, M_PI / 2, 0.1);
  Pose6DoF p = pose_to_6dof(pose);
  EXPECT_TRUE(p.degenerate);
  EXPECT_EQ(p.roll, 0.0);
  Mat3 r = rotation_from_euler(p.yaw, p.pitch, p.roll);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r.m[i], pose.rotation.m[i], 1e-9);
}

TEST(AngleWrap, IntoHalfOpenInterval) {
  EXPECT_NEAR(wrap_angle(3.0 - (-3.0)), 6.0 - 2 * M_PI, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_angle(M_PI), M_PI);
  EXPECT_DOUBLE_EQ(wrap_angle(-M_PI), M_PI);
}

TEST(Fundamental, RectifiedPairEpipolarLinesAreRows) {
  const double f = 40;
  Camera target = make_camera(f, f, 16, 16, Mat3::identity(), {0, 0, 0});
  Camera source = make_camera(f, f, 16, 16, Mat3::identity(), {0.5, 0, 0});
  Mat3 F = fundamental_matrix(target, source);
  for (double y : {3.0, 15.0, 30.0})
    for (double xt : {2.0, 20.0})
      for (double xs : {1.0, 25.0}) {
        const Vec3 line = F * Vec3{xt, y, 1.0};
        EXPECT_NEAR(line.x * xs + line.y * y + line.z, 0.0, 1e-9);
      }
}

TEST(Fundamental, ResidualOnProjectedCorrespondences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pix(0, 63), dd(2.0, 9.0);
  Camera target = make_camera(52, 49, 32, 31, random_rotation(rng), {0, 0, 0});
  Camera source =
      make_camera(47, 51, 30, 33, random_rotation(rng), {0.4, -0.1, 0.2});
  Mat3 F = fundamental_matrix(target, source);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    PixelCoord xt{pix(rng), pix(rng)};
    Projection p = project(xt, dd(rng), target, source);
    if (!p.in_front) continue;
    const Vec3 line = F * Vec3{xt.x, xt.y, 1.0};
    EXPECT_NEAR(line.x * p.x + line.y * p.y + line.z, 0.0, 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Fundamental, SwapGivesTransposeUpToSign) {
  std::mt19937_64 rng(7);
  Camera a = make_camera(50, 50, 32, 32, random_rotation(rng), {0, 0, 0});
  Camera b = make_camera(50, 50, 32, 32, random_rotation(rng), {0.3, 0.1, 0.0});
  Mat3 Fab = fundamental_matrix(a, b);
  Mat3 Fba = fundamental_matrix(b, a);
  const double sign = (Fab.m[0] * Fba.transposed().m[0] >= 0) ? 1.0 : -1.0;
  for (int i = 0; i < 9; ++i)
    EXPECT_NEAR(Fab.m[i], sign * Fba.transposed().m[i], 1e-9);
}

TEST(Fundamental, IdenticalCentersRejected) {
  Camera a = make_camera(50, 50, 32, 32, Mat3::identity(), {0, 0, 0});
  EXPECT_THROW(fundamental_matrix(a, a), ConfigError);
}

TEST(Neighborhood, RectifiedDisparityRange) {
  // disparity f*b/d in [0,4], M=5 -> integer shifts 0..4
  const double f = 40, b = 0.5;
  Camera target = make_camera(f, f, 16, 16, Mat3::identity(), {0, 0, 0});
  Camera source = make_camera(f, f, 16, 16, Mat3::identity(), {b, 0, 0});
  DepthRange range{f * b / 4.0, std::numeric_limits<double>::infinity()};
  NeighborhoodIndex idx = build_neighborhood(target, source, range, 5, 32, 32, 32, 32);
  const std::size_t P = 32 * 32;
  const std::size_t x = 10, y = 12, p = y * 32 + x;
  for (std::size_t m = 0; m < 5; ++m) {
    ASSERT_TRUE(idx.valid[m * P + p]);
    EXPECT_EQ(idx.xs[m * P + p], std::int32_t(x + m));
    EXPECT_EQ(idx.ys[m * P + p], std::int32_t(y));
  }
}

TEST(Neighborhood, IdenticalCamerasDeduplicateToOneEntry) {
  Camera cam = make_camera(40, 40, 16, 16, Mat3::identity(), {0, 0, 0});
  DepthRange range{1.0, 10.0};
  NeighborhoodIndex idx = build_neighborhood(cam, cam, range, 6, 32, 32, 32, 32);
  const std::size_t P = 32 * 32;
  for (std::size_t p = 0; p < P; ++p) {
    EXPECT_EQ(idx.valid_count[p], 1);
    EXPECT_EQ(idx.xs[p], std::int32_t(p % 32));
    EXPECT_EQ(idx.ys[p], std::int32_t(p / 32));
  }
}

TEST(Neighborhood, EntriesSatisfyEpipolarResidual) {
  std::mt19937_64 rng(11);
  Camera target = make_camera(52, 50, 16, 16, random_rotation(rng), {0, 0, 0});
  Camera source =
      make_camera(49, 51, 15, 17, random_rotation(rng), {0.3, 0.05, 0.1});
  Mat3 F = fundamental_matrix(target, source);
  DepthRange range{2.0, 9.0};
  NeighborhoodIndex idx = build_neighborhood(target, source, range, 8, 32, 32, 32, 32);
  const std::size_t P = 32 * 32;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t m = 0; m < 8; ++m) {
      if (!idx.valid[m * P + p]) continue;
      // in bounds
      ASSERT_GE(idx.xs[m * P + p], 0);
      ASSERT_LT(idx.xs[m * P + p], 32);
      PixelCoord xs{double(idx.xs[m * P + p]), double(idx.ys[m * P + p])};
      PixelCoord xt{double(p % 32), double(p / 32)};
      // integer rounding keeps entries within 0.75 px of the line
      EXPECT_LE(epipolar_residual(F, xs, xt), 0.75);
    }
}

TEST(Neighborhood, BadRangeOrCountRejected) {
  Camera a = make_camera(40, 40, 16, 16, Mat3::identity(), {0, 0, 0});
  Camera b = make_camera(40, 40, 16, 16, Mat3::identity(), {0.4, 0, 0});
  std::int32_t xs[4], ys[4];
  std::uint8_t v[4];
  EXPECT_THROW(epipolar_neighborhood_entry({0, 0}, a, b, {5.0, 2.0}, 4, 32, 32,
                                           xs, ys, v, 1),
               ConfigError);
  EXPECT_THROW(epipolar_neighborhood_entry({0, 0}, a, b, {2.0, 5.0}, 1, 32, 32,
                                           xs, ys, v, 1),
               ConfigError);
}

TEST(LfDisparity, ScalingRules) {
  using Tf = Tensor<float>;
  auto flow = Tf::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  // target at midpoint of the two sources -> halved
  auto half = scale_lf_disparity(flow, 0.0, 4.0, 2.0);
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_FLOAT_EQ(half.data()[i], flow.data()[i] * 0.5f);
  // target == source -> zero
  auto zero = scale_lf_disparity(flow, 0.0, 4.0, 0.0);
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  // positions (0,4), target 1 -> scale 0.25
  auto quarter = scale_lf_disparity(flow, 0.0, 4.0, 1.0);
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_FLOAT_EQ(quarter.data()[i], flow.data()[i] * 0.25f);
  EXPECT_THROW(scale_lf_disparity(flow, 2.0, 2.0, 3.0), ConfigError);
}

TEST(CameraText, RoundTrip) {
  Camera cam = make_camera(50.5, 49.25, 31.5, 32.5,
                           rotation_from_euler(0.2, -0.3, 0.1), {0.25, -0.5, 1.0});
  std::stringstream ss;
  write_camera_text(ss, cam);
  Camera back = read_camera_text(ss);
  EXPECT_DOUBLE_EQ(back.intrinsics.fx, cam.intrinsics.fx);
  EXPECT_DOUBLE_EQ(back.intrinsics.cy, cam.intrinsics.cy);
  for (int i = 0; i < 9; ++i)
    EXPECT_NEAR(back.pose.rotation.m[i], cam.pose.rotation.m[i], 1e-12);
  EXPECT_DOUBLE_EQ(back.pose.translation.z, 1.0);

  std::stringstream bad("not numbers at all");
  EXPECT_THROW(read_camera_text(bad), DataError);
}
