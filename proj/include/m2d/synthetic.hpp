#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"
#include "m2d/io.hpp"

namespace m2d {

namespace noise {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double lattice(std::int64_t xi, std::int64_t yi, std::uint64_t key) {
  std::uint64_t h = mix(static_cast<std::uint64_t>(xi) * 0x8da6b343ull ^
                        static_cast<std::uint64_t>(yi) * 0xd8163841ull ^ key);
  return (h >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Deterministic multi-octave value noise in [0,1], keyed so different
/// primitives and channels decorrelate.
inline double value_noise(double u, double v, std::uint64_t key, int octaves = 4) {
  double sum = 0.0, amp = 1.0, total = 0.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    const double x = u * freq, y = v * freq;
    const double fx = std::floor(x), fy = std::floor(y);
    const std::int64_t xi = static_cast<std::int64_t>(fx);
    const std::int64_t yi = static_cast<std::int64_t>(fy);
    const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
    const std::uint64_t k = key ^ (static_cast<std::uint64_t>(o) << 56);
    const double v00 = lattice(xi, yi, k), v10 = lattice(xi + 1, yi, k);
    const double v01 = lattice(xi, yi + 1, k), v11 = lattice(xi + 1, yi + 1, k);
    const double top = v00 + tx * (v10 - v00);
    const double bot = v01 + tx * (v11 - v01);
    sum += amp * (top + ty * (bot - top));
    total += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / total;
}

}  // namespace noise

enum class TextureKind { kNoise, kPlaid };

/// Procedural surface color around mid-gray. Value noise gives organic
/// multi-octave texture; the plaid kind sums four incommensurate
/// sinusoidal gratings, which keeps local contrast high everywhere and
/// the spectrum band-limited, so warped resampling stays well behaved
/// at the feature scale. Texture coordinates are in surface meters
/// times the primitive frequency.
inline void texture_color(double u, double v, int texture_id, double amplitude, double rgb[3],
                          int octaves = 3, TextureKind kind = TextureKind::kPlaid) {
  if (kind == TextureKind::kNoise) {
    for (int c = 0; c < 3; ++c) {
      const std::uint64_t key = noise::mix(static_cast<std::uint64_t>(texture_id) * 1315423911ull +
                                           static_cast<std::uint64_t>(c));
      rgb[c] = 0.5 + amplitude * (noise::value_noise(u, v, key, octaves) - 0.5);
    }
    return;
  }
  // narrowband anisotropic noise: incommensurate gratings inside a
  // 1.6x wavelength band with directions within +-55 degrees of the
  // local u axis. Surfaces orient u along the rig's motion plane, so
  // texture gradients stay informative along the epipolar sweeps
  // instead of being aperture-limited.
  constexpr int kComponents = 12;
  double acc[3] = {0, 0, 0};
  for (int k = 0; k < kComponents; ++k) {
    const std::uint64_t key = noise::mix(static_cast<std::uint64_t>(texture_id) * 2654435761ull +
                                         static_cast<std::uint64_t>(k) * 97ull);
    const double spread = 55.0 * M_PI / 180.0;
    const double angle = (k / (kComponents - 1.0) - 0.5) * 2.0 * spread +
                         ((key >> 40) * (1.0 / (1 << 24)) - 0.5) * 0.15;
    const double phase = ((key >> 16) & 0xffffff) * (2.0 * M_PI / (1 << 24));
    const double lambda = 0.45 * std::pow(2.0, k / (kComponents - 1.0));
    const double proj = (u * std::cos(angle) + v * std::sin(angle)) / lambda;
    for (int c = 0; c < 3; ++c)
      acc[c] += std::sin(2.0 * M_PI * proj + phase + 0.4 * c);
  }
  constexpr double kContrast = 0.55 / 2.449;  // ~0.22 rms per channel
  for (int c = 0; c < 3; ++c)
    rgb[c] = std::clamp(0.5 + amplitude * kContrast * acc[c], 0.0, 1.0);
}

struct PlanePrimitive {
  RigidPose pose;  // local -> world; the plane is local z = 0 facing +z
  double half_width = 1.0;
  double half_height = 1.0;
  int texture_id = 1;
  double frequency = 1.0;  // texture cycles per meter
  double amplitude = 1.0;
  int octaves = 3;
  TextureKind kind = TextureKind::kPlaid;
  // optional low-contrast band in local y, used by ablation scenes
  double band_lo = 0.0;
  double band_hi = 0.0;
  double band_amp = 1.0;
};

struct SpherePrimitive {
  Vec3 center;
  double radius = 1.0;
  int texture_id = 2;
  double frequency = 1.0;
  double amplitude = 1.0;
  int octaves = 3;
  TextureKind kind = TextureKind::kPlaid;
};

struct Backdrop {
  double radius = 60.0;
  int texture_id = 0;
  double frequency = 4.0;
  double amplitude = 1.0;
  int octaves = 3;
  TextureKind kind = TextureKind::kPlaid;
};

/// Procedural multi-camera scene. The backdrop sphere is centered at
/// the world origin and guarantees every ray from inside it hits
/// something.
struct Scene {
  Backdrop backdrop;
  std::vector<PlanePrimitive> planes;
  std::vector<SpherePrimitive> spheres;
};

struct RayHit {
  double depth = std::numeric_limits<double>::infinity();  // ray parameter = camera z-depth
  double rgb[3] = {0, 0, 0};
  bool hit = false;
};

namespace detail {

inline void consider_plane(const PlanePrimitive& pl, const Vec3& origin, const Vec3& dir,
                           RayHit& best) {
  const Mat3 rt = pl.pose.rotation.transposed();
  const Vec3 ol = rt * (origin - pl.pose.translation);
  const Vec3 dl = rt * dir;
  if (std::abs(dl.z) < 1e-12) return;
  const double s = -ol.z / dl.z;
  if (s <= 1e-9 || s >= best.depth) return;
  const double px = ol.x + s * dl.x;
  const double py = ol.y + s * dl.y;
  if (std::abs(px) > pl.half_width || std::abs(py) > pl.half_height) return;
  best.depth = s;
  best.hit = true;
  double amp = pl.amplitude;
  if (pl.band_hi > pl.band_lo && py >= pl.band_lo && py <= pl.band_hi) amp = pl.band_amp;
  texture_color(px * pl.frequency, py * pl.frequency, pl.texture_id, amp, best.rgb,
                pl.octaves, pl.kind);
}

inline void consider_sphere(const SpherePrimitive& sp, const Vec3& origin, const Vec3& dir,
                            RayHit& best) {
  const Vec3 oc = origin - sp.center;
  const double a = dir.dot(dir);
  const double b = 2.0 * oc.dot(dir);
  const double c = oc.dot(oc) - sp.radius * sp.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  double s = (-b - sq) / (2.0 * a);
  if (s <= 1e-9) s = (-b + sq) / (2.0 * a);
  if (s <= 1e-9 || s >= best.depth) return;
  const Vec3 hit = origin + dir * s;
  const Vec3 n = (hit - sp.center) * (1.0 / sp.radius);
  best.depth = s;
  best.hit = true;
  const double u = std::atan2(n.x, n.z);
  const double v = std::asin(std::clamp(n.y, -1.0, 1.0));
  texture_color(u * sp.radius * sp.frequency, v * sp.radius * sp.frequency, sp.texture_id,
                sp.amplitude, best.rgb, sp.octaves, sp.kind);
}

inline void consider_backdrop(const Backdrop& bd, const Vec3& origin, const Vec3& dir,
                              RayHit& best) {
  // camera centers sit inside the backdrop so the far root always exists
  const double a = dir.dot(dir);
  const double b = 2.0 * origin.dot(dir);
  const double c = origin.dot(origin) - bd.radius * bd.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return;
  const double s = (-b + std::sqrt(disc)) / (2.0 * a);
  if (s <= 1e-9 || s >= best.depth) return;
  const Vec3 hit = origin + dir * s;
  const Vec3 n = hit * (1.0 / bd.radius);
  best.depth = s;
  best.hit = true;
  const double u = std::atan2(n.x, n.z);
  const double v = std::asin(std::clamp(n.y, -1.0, 1.0));
  texture_color(u * bd.radius * bd.frequency, v * bd.radius * bd.frequency, bd.texture_id,
                bd.amplitude, best.rgb, bd.octaves, bd.kind);
}

}  // namespace detail

inline RayHit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  for (const auto& pl : scene.planes) detail::consider_plane(pl, origin, dir, best);
  for (const auto& sp : scene.spheres) detail::consider_sphere(sp, origin, dir, best);
  detail::consider_backdrop(scene.backdrop, origin, dir, best);
  return best;
}

struct RenderedFrame {
  Grid2D image;      // H x W x 3, values in [0,1]
  DepthMap depth_gt; // z-depth along the optical axis
  int camera = 0;
  int timestamp = 0;
};

/// Ray-cast one camera. Shading is pure albedo so photometric
/// consistency holds exactly across views. The ray direction is the
/// unnormalized (x, y, 1) camera ray, so the ray parameter at the hit
/// is the camera z-depth directly.
inline RenderedFrame render_camera(const Scene& scene, const CameraModel& cam,
                                   const RigidPose& cam_to_world, int camera_index,
                                   int timestamp) {
  RenderedFrame f{Grid2D(cam.height, cam.width, 3), DepthMap(cam.height, cam.width),
                  camera_index, timestamp};
  const Vec3 origin = cam_to_world.translation;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir_cam{(x - cam.intrinsics.cx) / cam.intrinsics.fx,
                         (y - cam.intrinsics.cy) / cam.intrinsics.fy, 1.0};
      const RayHit hit = cast_ray(scene, origin, cam_to_world.rotation * dir_cam);
      if (!hit.hit)
        throw std::runtime_error("render_camera: ray escaped the backdrop");
      f.depth_gt.at(y, x) = hit.depth;
      for (int c = 0; c < 3; ++c) f.image.at(y, x, c) = hit.rgb[c];
    }
  return f;
}

/// Render all rig cameras at one ego pose (ego -> world).
inline std::vector<RenderedFrame> render(const Scene& scene, const CameraRig& rig,
                                         const RigidPose& ego_to_world, int timestamp = 0) {
  std::vector<RenderedFrame> frames;
  frames.reserve(rig.cameras.size());
  for (int c = 0; c < rig.size(); ++c)
    frames.push_back(render_camera(scene, rig.cameras[c],
                                   compose(ego_to_world, rig.cameras[c].extrinsic), c,
                                   timestamp));
  return frames;
}

struct TwoFrameSequence {
  std::vector<RenderedFrame> prev;  // t-1
  std::vector<RenderedFrame> curr;  // t
  RigidPose ego_motion;             // ground-truth P_{t->t-1}
};

/// Two-frame capture: the t-1 ego frame is the world frame and the ego
/// advances by ego_motion, which therefore equals P_{t->t-1}.
inline TwoFrameSequence make_two_frame_sequence(const Scene& scene, const CameraRig& rig,
                                                const RigidPose& ego_motion) {
  for (const auto& cam : rig.cameras) {
    const Vec3 c0 = cam.extrinsic.translation;
    const Vec3 c1 = compose(ego_motion, cam.extrinsic).translation;
    if (c0.norm() >= scene.backdrop.radius || c1.norm() >= scene.backdrop.radius)
      throw std::invalid_argument("make_two_frame_sequence: camera leaves the backdrop");
  }
  TwoFrameSequence seq;
  seq.prev = render(scene, rig, RigidPose::identity(), 0);
  seq.curr = render(scene, rig, ego_motion, 1);
  seq.ego_motion = ego_motion;
  return seq;
}

struct TriangulationResult {
  double depth = 0.0;     // z-depth of the midpoint in camera a
  double residual = 0.0;  // closest-approach gap in meters
  bool ok = false;
};

/// Midpoint-of-closest-approach triangulation of one correspondence.
/// cam poses are camera -> common frame. Near-parallel rays (angle
/// below min_angle) and coincident centers are rejected.
inline TriangulationResult triangulate(const Vec2& p_a, const Vec2& p_b,
                                       const CameraIntrinsics& k_a, const RigidPose& cam_a,
                                       const CameraIntrinsics& k_b, const RigidPose& cam_b,
                                       double min_angle_rad = 0.01) {
  const Vec3 o1 = cam_a.translation;
  const Vec3 o2 = cam_b.translation;
  if ((o1 - o2).norm() < 1e-9) return {};
  Vec3 d1 = cam_a.rotation * Vec3{(p_a.x - k_a.cx) / k_a.fx, (p_a.y - k_a.cy) / k_a.fy, 1.0};
  Vec3 d2 = cam_b.rotation * Vec3{(p_b.x - k_b.cx) / k_b.fx, (p_b.y - k_b.cy) / k_b.fy, 1.0};
  d1 = d1 * (1.0 / d1.norm());
  d2 = d2 * (1.0 / d2.norm());
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;  // sin^2(angle)
  const double s_min = std::sin(min_angle_rad);
  if (denom < s_min * s_min) return {};
  const Vec3 w0 = o1 - o2;
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double s = (b * e - d) / denom;
  const double t = (e - b * d) / denom;
  if (s <= 0.0 || t <= 0.0) return {};
  const Vec3 q1 = o1 + d1 * s;
  const Vec3 q2 = o2 + d2 * t;
  const Vec3 mid = (q1 + q2) * 0.5;
  TriangulationResult r;
  r.residual = (q1 - q2).norm();
  r.depth = (invert(cam_a).apply(mid)).z;
  r.ok = r.depth > kZMin;
  return r;
}

struct Correspondence {
  int cam_a = 0;
  int cam_b = 0;
  Vec2 p_a;
  Vec2 p_b;
};

struct SparseDepthOptions {
  int stride = 4;
  int offset = 2;
  double residual_gate = 0.02;  // meters
  double min_angle_rad = 0.01;
};

struct SparseDepthResult {
  std::vector<DepthMap> per_camera;  // validity 1 only at accepted samples
  std::size_t n_accepted = 0;
  std::size_t n_rejected = 0;

  bool empty() const { return n_accepted == 0; }
};

/// Triangulate a correspondence list against the rig and keep samples
/// that pass the residual gate. Rejected samples never enter the mask.
inline SparseDepthResult triangulate_correspondences(const std::vector<Correspondence>& corrs,
                                                     const CameraRig& rig,
                                                     const SparseDepthOptions& opts) {
  SparseDepthResult out;
  out.per_camera.reserve(rig.cameras.size());
  for (const auto& cam : rig.cameras)
    out.per_camera.emplace_back(cam.height, cam.width, 0.0, 0.0);
  for (const auto& c : corrs) {
    const auto& a = rig.cameras.at(c.cam_a);
    const auto& b = rig.cameras.at(c.cam_b);
    const TriangulationResult t = triangulate(c.p_a, c.p_b, a.intrinsics, a.extrinsic,
                                              b.intrinsics, b.extrinsic, opts.min_angle_rad);
    const int x = static_cast<int>(std::lround(c.p_a.x));
    const int y = static_cast<int>(std::lround(c.p_a.y));
    if (!t.ok || t.residual > opts.residual_gate || x < 0 || x >= a.width || y < 0 ||
        y >= a.height) {
      ++out.n_rejected;
      continue;
    }
    out.per_camera[c.cam_a].at(y, x) = t.depth;
    out.per_camera[c.cam_a].valid_at(y, x) = 1.0;
    ++out.n_accepted;
  }
  return out;
}

/// Ground-truth-reprojection correspondences between each camera and
/// its adjacent neighbors on a stride grid.
inline std::vector<Correspondence> gt_correspondences(const std::vector<RenderedFrame>& frames,
                                                      const CameraRig& rig,
                                                      const SparseDepthOptions& opts) {
  std::vector<Correspondence> corrs;
  for (int c = 0; c < rig.size(); ++c) {
    const auto& cam = rig.cameras[c];
    for (int nb : {rig.adjacency[c].first, rig.adjacency[c].second}) {
      const RigidPose rel = spatial_relative_pose(rig, c, nb);
      const auto& cam_b = rig.cameras[nb];
      for (int y = opts.offset; y < cam.height; y += opts.stride)
        for (int x = opts.offset; x < cam.width; x += opts.stride) {
          const double d = frames[c].depth_gt.at(y, x);
          const WarpResult wr =
              warp_pixel({static_cast<double>(x), static_cast<double>(y)}, d, cam.intrinsics,
                         cam_b.intrinsics, rel, cam_b.width, cam_b.height);
          if (!wr.valid) continue;
          // occlusion check against the neighbor's depth
          const int nx = static_cast<int>(std::lround(wr.pixel.x));
          const int ny = static_cast<int>(std::lround(wr.pixel.y));
          if (std::abs(frames[nb].depth_gt.at(ny, nx) - wr.depth) > 0.05 * wr.depth) continue;
          corrs.push_back({c, nb, {static_cast<double>(x), static_cast<double>(y)}, wr.pixel});
        }
    }
  }
  return corrs;
}

/// Sparse SfM-style pseudo depth from adjacent-camera triangulation.
inline SparseDepthResult sparse_pseudo_depth(const std::vector<RenderedFrame>& frames,
                                             const CameraRig& rig,
                                             const SparseDepthOptions& opts = {}) {
  return triangulate_correspondences(gt_correspondences(frames, rig, opts), rig, opts);
}

// ---------------------------------------------------------------------------
// Scene JSON

inline TextureKind texture_kind_from_string(const std::string& s) {
  if (s == "noise") return TextureKind::kNoise;
  if (s == "plaid") return TextureKind::kPlaid;
  throw std::runtime_error("unknown texture kind: " + s);
}

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["backdrop"] = {{"radius", s.backdrop.radius},
                   {"texture_id", s.backdrop.texture_id},
                   {"frequency", s.backdrop.frequency},
                   {"amplitude", s.backdrop.amplitude},
                   {"octaves", s.backdrop.octaves},
                   {"kind", s.backdrop.kind == TextureKind::kPlaid ? "plaid" : "noise"}};
  j["planes"] = nlohmann::json::array();
  for (const auto& p : s.planes) {
    nlohmann::json pj;
    pj["pose"] = pose_to_json(p.pose);
    pj["half_width"] = p.half_width;
    pj["half_height"] = p.half_height;
    pj["texture_id"] = p.texture_id;
    pj["frequency"] = p.frequency;
    pj["amplitude"] = p.amplitude;
    pj["octaves"] = p.octaves;
    pj["kind"] = p.kind == TextureKind::kPlaid ? "plaid" : "noise";
    pj["band_lo"] = p.band_lo;
    pj["band_hi"] = p.band_hi;
    pj["band_amp"] = p.band_amp;
    j["planes"].push_back(pj);
  }
  j["spheres"] = nlohmann::json::array();
  for (const auto& sp : s.spheres) {
    nlohmann::json sj;
    sj["center"] = {sp.center.x, sp.center.y, sp.center.z};
    sj["radius"] = sp.radius;
    sj["texture_id"] = sp.texture_id;
    sj["frequency"] = sp.frequency;
    sj["amplitude"] = sp.amplitude;
    sj["octaves"] = sp.octaves;
    sj["kind"] = sp.kind == TextureKind::kPlaid ? "plaid" : "noise";
    j["spheres"].push_back(sj);
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  if (j.contains("backdrop")) {
    const auto& b = j["backdrop"];
    s.backdrop.radius = b.value("radius", 60.0);
    s.backdrop.texture_id = b.value("texture_id", 0);
    s.backdrop.frequency = b.value("frequency", 4.0);
    s.backdrop.amplitude = b.value("amplitude", 1.0);
    s.backdrop.octaves = b.value("octaves", 3);
    s.backdrop.kind = texture_kind_from_string(b.value("kind", std::string("plaid")));
  }
  for (const auto& pj : j.value("planes", nlohmann::json::array())) {
    PlanePrimitive p;
    p.pose = pose_from_json(pj.at("pose"));
    p.half_width = pj.at("half_width").get<double>();
    p.half_height = pj.at("half_height").get<double>();
    p.texture_id = pj.value("texture_id", 1);
    p.frequency = pj.value("frequency", 1.0);
    p.amplitude = pj.value("amplitude", 1.0);
    p.octaves = pj.value("octaves", 3);
    p.kind = texture_kind_from_string(pj.value("kind", std::string("plaid")));
    p.band_lo = pj.value("band_lo", 0.0);
    p.band_hi = pj.value("band_hi", 0.0);
    p.band_amp = pj.value("band_amp", 1.0);
    s.planes.push_back(p);
  }
  for (const auto& sj : j.value("spheres", nlohmann::json::array())) {
    SpherePrimitive sp;
    const auto& c = sj.at("center");
    sp.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    sp.radius = sj.at("radius").get<double>();
    sp.texture_id = sj.value("texture_id", 2);
    sp.frequency = sj.value("frequency", 1.0);
    sp.amplitude = sj.value("amplitude", 1.0);
    sp.octaves = sj.value("octaves", 3);
    sp.kind = texture_kind_from_string(sj.value("kind", std::string("plaid")));
    s.spheres.push_back(sp);
  }
  return s;
}

inline void write_scene(const std::string& path, const Scene& s) {
  detail::write_file(path, scene_to_json(s).dump(2) + "\n");
}

inline Scene read_scene(const std::string& path) {
  return scene_from_json(nlohmann::json::parse(detail::read_file(path)));
}

// ---------------------------------------------------------------------------
// Default desk-scale configurations

/// 6 cameras at 60 degree yaw spacing, 90 degree horizontal FOV,
/// 96x160 resolution. Camera 0 faces ego +z. The circle radius sets
/// the adjacent-camera baseline (equal to the radius at 60 degrees).
inline CameraRig make_default_rig(int width = 160, int height = 96, double circle_radius = 0.6) {
  CameraRig rig;
  const double fx = width / 2.0;  // 90 degree horizontal FOV
  for (int c = 0; c < 6; ++c) {
    const double yaw = c * (M_PI / 3.0);
    CameraModel cam;
    cam.intrinsics = {fx, fx, (width - 1) / 2.0, (height - 1) / 2.0};
    cam.width = width;
    cam.height = height;
    cam.extrinsic.rotation = Mat3::rot_y(yaw);
    cam.extrinsic.translation = {std::sin(yaw) * circle_radius, 0.0,
                                 std::cos(yaw) * circle_radius};
    rig.cameras.push_back(cam);
  }
  for (int c = 0; c < 6; ++c) rig.adjacency.emplace_back((c + 5) % 6, (c + 1) % 6);
  rig.validate();
  return rig;
}

/// Textured box room around the rig: four walls, floor and ceiling.
/// Planar surfaces keep the two-frame appearance change a near-pure
/// shift under the default in-plane ego motion, which is what sub-bin
/// plane-sweep matching needs at desk scale.
inline Scene make_default_scene() {
  Scene s;
  s.backdrop = {12.0, 0, 0.4, 1.0};
  const double half = 2.2;    // wall distance from the rig center
  const double height = 1.3;  // floor/ceiling distance (y points down)
  for (int w = 0; w < 4; ++w) {
    PlanePrimitive wall;
    const double az = w * (M_PI / 2.0);
    wall.pose.rotation = Mat3::rot_y(az);
    wall.pose.translation = {std::sin(az) * half, 0.0, std::cos(az) * half};
    wall.half_width = half + 0.4;
    wall.half_height = height + 0.4;
    wall.texture_id = 11 + w;
    wall.frequency = 1.0;
    s.planes.push_back(wall);
  }
  PlanePrimitive floor;
  floor.pose.rotation = Mat3::rot_x(M_PI / 2.0);
  floor.pose.translation = {0.0, height, 0.0};
  floor.half_width = half + 0.4;
  floor.half_height = half + 0.4;
  floor.texture_id = 7;
  floor.frequency = 1.0;
  s.planes.push_back(floor);
  PlanePrimitive ceiling = floor;
  ceiling.pose.translation = {0.0, -height, 0.0};
  ceiling.texture_id = 8;
  s.planes.push_back(ceiling);
  return s;
}

/// Default two-frame ego motion: horizontal, at 45 degrees to the
/// front camera so every camera and the floor/ceiling see mostly
/// in-plane parallax, with a slight yaw.
inline RigidPose make_default_ego_motion() {
  RigidPose p;
  p.rotation = Mat3::rot_y(0.012);
  p.translation = {1.6, -0.2, 0.0};
  return p;
}

/// Scene for the spatial-temporal ablation: a wall in front of the
/// front camera with a low-contrast horizontal strip. Paired with
/// mostly forward ego motion the strip starves temporal matching while
/// the adjacent cameras still see it from their wide baselines.
inline Scene make_strip_scene() {
  Scene s = make_default_scene();
  s.planes.erase(s.planes.begin() + 1);  // drop the camera-0 sector billboard
  PlanePrimitive strip;
  strip.pose.rotation = Mat3::rot_x(M_PI);
  strip.pose.translation = {0.0, 0.0, 5.0};
  strip.half_width = 4.2;
  strip.half_height = 2.8;
  strip.texture_id = 31;
  strip.frequency = 0.8;
  strip.amplitude = 1.0;
  strip.band_lo = -0.7;
  strip.band_hi = 0.7;
  strip.band_amp = 0.06;
  s.planes.insert(s.planes.begin(), strip);
  return s;
}

}  // namespace m2d
