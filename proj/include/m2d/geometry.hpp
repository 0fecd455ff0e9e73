#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace m2d {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
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
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  bool is_identity() const {
    for (int i = 0; i < 9; ++i)
      if (m[i] != (i % 4 == 0 ? 1.0 : 0.0)) return false;
    return true;
  }

  static Mat3 rot_x(double rad) {
    Mat3 r;
    const double c = std::cos(rad), s = std::sin(rad);
    r.m = {1, 0, 0, 0, c, -s, 0, s, c};
    return r;
  }
  static Mat3 rot_y(double rad) {
    Mat3 r;
    const double c = std::cos(rad), s = std::sin(rad);
    r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
    return r;
  }
  static Mat3 rot_z(double rad) {
    Mat3 r;
    const double c = std::cos(rad), s = std::sin(rad);
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
  }
};

/// Rigid SE(3) transform acting on points as R*X + t.
struct RigidPose {
  Mat3 rotation;
  Vec3 translation;

  static RigidPose identity() { return RigidPose{}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  bool is_identity() const {
    return rotation.is_identity() && translation.x == 0.0 && translation.y == 0.0 &&
           translation.z == 0.0;
  }

  /// Orthonormality residual max(|R^T R - I|), for invariant checks.
  double orthonormality_error() const {
    const Mat3 e = rotation.transposed() * rotation;
    double err = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        err = std::max(err, std::abs(e(i, j) - (i == j ? 1.0 : 0.0)));
    return err;
  }
};

/// a then-applied-after b: compose(a, b).apply(p) == a.apply(b.apply(p)).
inline RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidPose invert(const RigidPose& p) {
  const Mat3 rt = p.rotation.transposed();
  return {rt, (rt * p.translation) * -1.0};
}

/// Ego motion from the front-camera motion: T0 * P0 * (T0)^-1, the
/// change of basis matching camera->ego extrinsics. The inverse
/// conjugation of camera_pose_from_ego, so deriving the ego pose and
/// projecting it back to camera 0 recovers the front pose exactly.
inline RigidPose ego_pose_from_front(const RigidPose& front_pose, const RigidPose& front_extrinsic) {
  return compose(front_extrinsic, compose(front_pose, invert(front_extrinsic)));
}

/// Per-camera motion from the ego motion: (Tc)^-1 * P * Tc.
inline RigidPose camera_pose_from_ego(const RigidPose& ego_pose, const RigidPose& cam_extrinsic) {
  return compose(invert(cam_extrinsic), compose(ego_pose, cam_extrinsic));
}

/// Axis-angle (Rodrigues) parameterization, used by pose refinement.
inline Mat3 rotation_from_axis_angle(const Vec3& aa) {
  const double theta = aa.norm();
  if (theta < 1e-12) {
    Mat3 r;
    // first-order term keeps tiny updates smooth
    r.m = {1, -aa.z, aa.y, aa.z, 1, -aa.x, -aa.y, aa.x, 1};
    return r;
  }
  const Vec3 k = aa * (1.0 / theta);
  const double c = std::cos(theta), s = std::sin(theta), v = 1 - c;
  Mat3 r;
  r.m = {k.x * k.x * v + c,       k.x * k.y * v - k.z * s, k.x * k.z * v + k.y * s,
         k.x * k.y * v + k.z * s, k.y * k.y * v + c,       k.y * k.z * v - k.x * s,
         k.x * k.z * v - k.y * s, k.y * k.z * v + k.x * s, k.z * k.z * v + c};
  return r;
}

inline Vec3 axis_angle_from_rotation(const Mat3& r) {
  const double tr = r(0, 0) + r(1, 1) + r(2, 2);
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-12) return {0, 0, 0};
  Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  const double n = axis.norm();
  if (n < 1e-12) {
    // theta near pi: fall back to the diagonal
    Vec3 a{std::sqrt(std::max(0.0, (r(0, 0) + 1) / 2)),
           std::sqrt(std::max(0.0, (r(1, 1) + 1) / 2)),
           std::sqrt(std::max(0.0, (r(2, 2) + 1) / 2))};
    if (r(0, 1) + r(1, 0) < 0) a.y = -a.y;
    if (r(0, 2) + r(2, 0) < 0) a.z = -a.z;
    return a * theta;
  }
  return axis * (theta / n);
}

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
};

struct CameraModel {
  CameraIntrinsics intrinsics;
  RigidPose extrinsic;  // camera -> ego
  int width = 0;
  int height = 0;
};

/// Calibrated rig. Camera 0 is the front camera; adjacency lists the
/// (left, right) neighbor index of each camera.
struct CameraRig {
  std::vector<CameraModel> cameras;
  std::vector<std::pair<int, int>> adjacency;

  int size() const { return static_cast<int>(cameras.size()); }

  void validate() const {
    if (cameras.empty()) throw std::invalid_argument("CameraRig: empty");
    if (adjacency.size() != cameras.size())
      throw std::invalid_argument("CameraRig: adjacency size mismatch");
    for (const auto& [l, r] : adjacency)
      if (l < 0 || l >= size() || r < 0 || r >= size())
        throw std::invalid_argument("CameraRig: adjacency index out of range");
    for (const auto& c : cameras) {
      if (c.intrinsics.fx <= 0 || c.intrinsics.fy <= 0)
        throw std::invalid_argument("CameraRig: nonpositive focal length");
      if (c.extrinsic.orthonormality_error() > 1e-9)
        throw std::invalid_argument("CameraRig: extrinsic rotation not orthonormal");
    }
  }
};

/// Relative pose from camera c into camera c': (T^{c'})^-1 * T^c.
inline RigidPose spatial_relative_pose(const CameraRig& rig, int c, int c_prime) {
  if (c < 0 || c >= rig.size() || c_prime < 0 || c_prime >= rig.size())
    throw std::out_of_range("spatial_relative_pose: camera index out of range");
  return compose(invert(rig.cameras[c_prime].extrinsic), rig.cameras[c].extrinsic);
}

/// Transformed points with z below this are behind the camera for all
/// practical purposes and invalidate the warp.
inline constexpr double kZMin = 1e-3;

struct WarpResult {
  Vec2 pixel;    // continuous destination coordinates
  double depth;  // z in the destination camera
  bool valid;
};

/// Plane-sweep warp: back-project pixel p at depth d with K_src,
/// transform by rel, project with K_dst. Integer coordinates are pixel
/// centers; destination bounds for validity are [0, W-1] x [0, H-1].
/// An exact-identity rel with matching intrinsics short-circuits to p,
/// keeping the zero-motion path bit-exact.
inline WarpResult warp_pixel(const Vec2& p, double d, const CameraIntrinsics& k_src,
                             const CameraIntrinsics& k_dst, const RigidPose& rel,
                             int dst_width, int dst_height) {
  if (d <= 0.0) throw std::invalid_argument("warp_pixel: nonpositive depth");
  Vec2 q;
  double z;
  if (rel.is_identity() && k_src.fx == k_dst.fx && k_src.fy == k_dst.fy &&
      k_src.cx == k_dst.cx && k_src.cy == k_dst.cy) {
    q = p;
    z = d;
  } else {
    const Vec3 xs{(p.x - k_src.cx) / k_src.fx * d, (p.y - k_src.cy) / k_src.fy * d, d};
    const Vec3 xd = rel.apply(xs);
    if (xd.z <= kZMin) return {{0, 0}, xd.z, false};
    q = {k_dst.fx * xd.x / xd.z + k_dst.cx, k_dst.fy * xd.y / xd.z + k_dst.cy};
    z = xd.z;
  }
  const bool in_bounds =
      q.x >= 0.0 && q.x <= dst_width - 1 && q.y >= 0.0 && q.y <= dst_height - 1;
  return {q, z, in_bounds};
}

/// Rig rescaled by `scale` (e.g. 0.25 for quarter-resolution feature maps).
/// Principal points follow the pixel-center convention.
inline CameraRig scaled_rig(const CameraRig& rig, double scale) {
  CameraRig out = rig;
  for (auto& cam : out.cameras) {
    cam.intrinsics.fx *= scale;
    cam.intrinsics.fy *= scale;
    cam.intrinsics.cx = (cam.intrinsics.cx + 0.5) * scale - 0.5;
    cam.intrinsics.cy = (cam.intrinsics.cy + 0.5) * scale - 0.5;
    cam.width = static_cast<int>(std::lround(cam.width * scale));
    cam.height = static_cast<int>(std::lround(cam.height * scale));
  }
  return out;
}

}  // namespace m2d
