#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <filesystem>
#include <random>

#include "m2d/geometry.hpp"
#include "m2d/io.hpp"

using namespace m2d;

namespace {

// independent 4x4 homogeneous matrix oracle
using Mat4 = std::array<double, 16>;

Mat4 to_mat4(const RigidPose& p) {
  Mat4 m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r * 4 + c] = p.rotation(r, c);
  m[3] = p.translation.x;
  m[7] = p.translation.y;
  m[11] = p.translation.z;
  m[15] = 1.0;
  return m;
}

Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int k = 0; k < 4; ++k) out[r * 4 + c] += a[r * 4 + k] * b[k * 4 + c];
  return out;
}

double max_diff(const RigidPose& p, const Mat4& m) {
  double e = 0;
  const Mat4 pm = to_mat4(p);
  for (int i = 0; i < 16; ++i) e = std::max(e, std::abs(pm[i] - m[i]));
  return e;
}

double pose_distance(const RigidPose& a, const RigidPose& b) {
  double e = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e = std::max(e, std::abs(a.rotation(r, c) - b.rotation(r, c)));
  e = std::max(e, std::abs(a.translation.x - b.translation.x));
  e = std::max(e, std::abs(a.translation.y - b.translation.y));
  e = std::max(e, std::abs(a.translation.z - b.translation.z));
  return e;
}

RigidPose random_pose(std::uint64_t seed, double t_scale = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Mat3 r = Mat3::rot_z(u(rng) * 3.0) * Mat3::rot_y(u(rng) * 3.0) * Mat3::rot_x(u(rng) * 3.0);
  return {r, {u(rng) * t_scale, u(rng) * t_scale, u(rng) * t_scale}};
}

}  // namespace

TEST_CASE("compose with identity and inverse round trip", "[geometry]") {
  const RigidPose p = random_pose(1);
  CHECK(pose_distance(compose(RigidPose::identity(), p), p) == 0.0);
  CHECK(pose_distance(compose(p, RigidPose::identity()), p) == 0.0);
  CHECK(pose_distance(compose(invert(p), p), RigidPose::identity()) < 1e-9);
  CHECK(pose_distance(compose(p, invert(p)), RigidPose::identity()) < 1e-9);
}

TEST_CASE("composition order matches the 4x4 matrix oracle", "[geometry]") {
  RigidPose rot{Mat3::rot_z(M_PI / 2), {0, 0, 0}};
  RigidPose trans{Mat3::identity(), {1, 0, 0}};
  // compose(a, b) applies b first
  const Vec3 a = compose(trans, rot).apply({0, 0, 0});
  CHECK(a.x == Catch::Approx(1.0));
  CHECK(a.y == Catch::Approx(0.0).margin(1e-12));
  const Vec3 b = compose(rot, trans).apply({0, 0, 0});
  CHECK(b.x == Catch::Approx(0.0).margin(1e-12));
  CHECK(b.y == Catch::Approx(1.0));

  const RigidPose p = random_pose(2), q = random_pose(3);
  CHECK(max_diff(compose(p, q), mul(to_mat4(p), to_mat4(q))) < 1e-12);
}

TEST_CASE("ego pose from front camera, trivial extrinsic", "[geometry]") {
  const RigidPose p0 = random_pose(4);
  CHECK(pose_distance(ego_pose_from_front(p0, RigidPose::identity()), p0) < 1e-12);
  const RigidPose t0 = random_pose(5);
  CHECK(pose_distance(ego_pose_from_front(RigidPose::identity(), t0), RigidPose::identity()) <
        1e-9);
}

TEST_CASE("ego pose conjugation example", "[geometry]") {
  // a front-camera translation along its x axis becomes an ego
  // translation rotated by the extrinsic yaw
  const RigidPose t0{Mat3::rot_z(M_PI / 2), {0, 0, 0}};
  const RigidPose p0{Mat3::identity(), {1, 0, 0}};
  const RigidPose ego = ego_pose_from_front(p0, t0);
  CHECK(ego.rotation.is_identity());
  CHECK(ego.translation.x == Catch::Approx(0.0).margin(1e-12));
  CHECK(ego.translation.y == Catch::Approx(1.0));
  CHECK(ego.translation.z == Catch::Approx(0.0).margin(1e-12));
  // against the matrix oracle
  const Mat4 expect = mul(mul(to_mat4(t0), to_mat4(p0)), to_mat4(invert(t0)));
  CHECK(max_diff(ego, expect) < 1e-12);
}

TEST_CASE("camera pose from ego pose", "[geometry]") {
  const RigidPose ego = random_pose(6);
  CHECK(pose_distance(camera_pose_from_ego(ego, RigidPose::identity()), ego) == 0.0);
  const RigidPose tc = random_pose(7);
  CHECK(pose_distance(camera_pose_from_ego(RigidPose::identity(), tc), RigidPose::identity()) <
        1e-9);
  const Mat4 expect = mul(mul(to_mat4(invert(tc)), to_mat4(ego)), to_mat4(tc));
  CHECK(max_diff(camera_pose_from_ego(ego, tc), expect) < 1e-12);
}

TEST_CASE("front conjugation round trip recovers the front pose", "[geometry]") {
  const RigidPose p0 = random_pose(8);
  const RigidPose t0 = random_pose(9);
  const RigidPose round = camera_pose_from_ego(ego_pose_from_front(p0, t0), t0);
  CHECK(pose_distance(round, p0) < 1e-9);
}

namespace {

CameraRig two_camera_rig(double yaw) {
  CameraRig rig;
  for (int i = 0; i < 2; ++i) {
    CameraModel cam;
    cam.intrinsics = {50, 50, 31.5, 23.5};
    cam.width = 64;
    cam.height = 48;
    cam.extrinsic.rotation = Mat3::rot_y(i * yaw);
    rig.cameras.push_back(cam);
  }
  rig.adjacency = {{1, 1}, {0, 0}};
  return rig;
}

}  // namespace

TEST_CASE("spatial relative pose", "[geometry]") {
  const CameraRig rig = two_camera_rig(M_PI / 3);
  const RigidPose self = spatial_relative_pose(rig, 0, 0);
  CHECK(pose_distance(self, RigidPose::identity()) < 1e-12);

  // two cameras differing by pure yaw: relative pose is the opposite yaw
  const RigidPose rel = spatial_relative_pose(rig, 0, 1);
  const RigidPose expect{Mat3::rot_y(-M_PI / 3), {0, 0, 0}};
  CHECK(pose_distance(rel, expect) < 1e-12);

  const RigidPose back = spatial_relative_pose(rig, 1, 0);
  CHECK(pose_distance(compose(back, rel), RigidPose::identity()) < 1e-12);

  CHECK_THROWS_AS(spatial_relative_pose(rig, 0, 5), std::out_of_range);
}

TEST_CASE("warp with identity pose is the identity map", "[geometry]") {
  const CameraIntrinsics k{60, 60, 31.5, 23.5};
  for (double d : {0.5, 2.0, 100.0}) {
    const WarpResult r = warp_pixel({10, 20}, d, k, k, RigidPose::identity(), 64, 48);
    CHECK(r.valid);
    CHECK(r.pixel.x == 10.0);
    CHECK(r.pixel.y == 20.0);
    CHECK(r.depth == d);
  }
}

TEST_CASE("warp hand-projection example", "[geometry]") {
  // X = (0,0,2) in the source, shifted by (1,0,0) -> X' = (1,0,2), x' = 1/2
  const CameraIntrinsics k{1, 1, 0, 0};
  RigidPose rel;
  rel.translation = {1, 0, 0};
  const WarpResult r = warp_pixel({0, 0}, 2.0, k, k, rel, 100, 100);
  CHECK(r.pixel.x == Catch::Approx(0.5));
  CHECK(r.pixel.y == Catch::Approx(0.0).margin(1e-15));
  CHECK(r.depth == Catch::Approx(2.0));
}

TEST_CASE("warp flags points behind the camera", "[geometry]") {
  const CameraIntrinsics k{50, 50, 32, 24};
  RigidPose rel;
  rel.translation = {0, 0, -5};
  const WarpResult r = warp_pixel({32, 24}, 2.0, k, k, rel, 64, 48);
  CHECK_FALSE(r.valid);
  CHECK(r.depth == Catch::Approx(-3.0));
}

TEST_CASE("warp rejects nonpositive depth", "[geometry]") {
  const CameraIntrinsics k{50, 50, 32, 24};
  CHECK_THROWS_AS(warp_pixel({0, 0}, 0.0, k, k, RigidPose::identity(), 64, 48),
                  std::invalid_argument);
}

TEST_CASE("warp round trip returns to the source pixel", "[geometry]") {
  const CameraIntrinsics k{55, 52, 31.5, 23.5};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> px(0.0, 63.0), py(0.0, 47.0), pd(1.0, 20.0);
  // small relative motion so warps stay inside the destination image
  RigidPose rel = random_pose(12, 0.3);
  rel.rotation = Mat3::rot_y(0.04) * Mat3::rot_x(-0.03) * Mat3::rot_z(0.02);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec2 p{px(rng), py(rng)};
    const double d = pd(rng);
    const WarpResult fwd = warp_pixel(p, d, k, k, rel, 64, 48);
    if (!fwd.valid) continue;
    const WarpResult back = warp_pixel(fwd.pixel, fwd.depth, k, k, invert(rel), 64, 48);
    if (!back.valid) continue;
    ++checked;
    CHECK(std::abs(back.pixel.x - p.x) < 1e-6);
    CHECK(std::abs(back.pixel.y - p.y) < 1e-6);
    CHECK(back.depth == Catch::Approx(d).epsilon(1e-9));
  }
  CHECK(checked > 50);
}

TEST_CASE("epipolar sweep traces a line", "[geometry]") {
  const CameraIntrinsics k{55, 52, 31.5, 23.5};
  const RigidPose rel = random_pose(13, 0.5);
  const Vec2 p{17.3, 29.1};
  std::vector<Vec2> pts;
  for (double d = 1.0; d < 40.0; d *= 1.4) {
    const WarpResult r = warp_pixel(p, d, k, k, rel, 10000, 10000);
    if (r.valid) pts.push_back(r.pixel);
  }
  REQUIRE(pts.size() >= 5);
  // collinearity: cross product of consecutive segments stays tiny
  const Vec2 a = pts.front(), b = pts.back();
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  REQUIRE(len > 1e-3);
  for (const Vec2& q : pts) {
    const double cross =
        ((b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x)) / len;
    CHECK(std::abs(cross) < 1e-7);
  }
}

TEST_CASE("scaled rig follows the pixel-center convention", "[geometry]") {
  CameraRig rig = two_camera_rig(M_PI / 3);
  const CameraRig quarter = scaled_rig(rig, 0.25);
  CHECK(quarter.cameras[0].intrinsics.fx == Catch::Approx(12.5));
  CHECK(quarter.cameras[0].intrinsics.cx == Catch::Approx((31.5 + 0.5) * 0.25 - 0.5));
  CHECK(quarter.cameras[0].width == 16);
  CHECK(quarter.cameras[0].height == 12);
}

TEST_CASE("rig JSON round trip", "[geometry]") {
  CameraRig rig = two_camera_rig(M_PI / 4);
  rig.cameras[1].extrinsic.translation = {0.5, -0.25, 1.0};
  const auto path = std::filesystem::temp_directory_path() / "m2d_rig_test.json";
  write_rig(path.string(), rig);
  const CameraRig loaded = read_rig(path.string());
  REQUIRE(loaded.size() == rig.size());
  for (int c = 0; c < rig.size(); ++c) {
    CHECK(pose_distance(loaded.cameras[c].extrinsic, rig.cameras[c].extrinsic) < 1e-15);
    CHECK(loaded.cameras[c].intrinsics.fx == rig.cameras[c].intrinsics.fx);
    CHECK(loaded.cameras[c].width == rig.cameras[c].width);
  }
  CHECK(loaded.adjacency == rig.adjacency);
  std::filesystem::remove(path);
}

TEST_CASE("axis-angle round trip", "[geometry]") {
  for (std::uint64_t s = 20; s < 30; ++s) {
    const RigidPose p = random_pose(s);
    const Vec3 aa = axis_angle_from_rotation(p.rotation);
    const Mat3 r = rotation_from_axis_angle(aa);
    double e = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) e = std::max(e, std::abs(r(i, j) - p.rotation(i, j)));
    CHECK(e < 1e-9);
  }
}
