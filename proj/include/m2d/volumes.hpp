#pragma once

#include <stdexcept>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"
#include "m2d/hypotheses.hpp"
#include "m2d/image_ops.hpp"

namespace m2d {

enum class VolumeSource { kSpatial, kTemporal };

/// Plane-sweep feature volume. Cells whose warp failed or whose sample
/// fell out of bounds carry validity 0 and value 0.
struct FeatureVolume {
  Grid3D values;    // D x H x W x C
  Grid3D validity;  // D x H x W x 1, weights in [0,1]
  VolumeSource source = VolumeSource::kTemporal;

  bool same_shape(const FeatureVolume& o) const {
    return values.same_shape(o.values) && validity.same_shape(o.validity);
  }
};

namespace detail {

/// Warp every pixel at one hypothesis bin and sample the source feature.
/// Writes value slices and a validity slice; invalid cells stay at 0.
inline void sweep_bin(const Grid2D& f_src, const RigidPose& rel, const CameraIntrinsics& k_ref,
                      const CameraIntrinsics& k_src, const DepthHypothesisSet& hyps, int bin,
                      FeatureVolume& out) {
  const int H = f_src.height, W = f_src.width, C = f_src.channels;
  Grid2D coords(H, W, 2, -1.0);  // -1 stays out of bounds for invalid warps
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const WarpResult wr = warp_pixel({static_cast<double>(x), static_cast<double>(y)},
                                       hyps.at(bin, y, x), k_ref, k_src, rel, W, H);
      if (!wr.valid) continue;
      coords.at(y, x, 0) = wr.pixel.x;
      coords.at(y, x, 1) = wr.pixel.y;
    }
  const SampleResult s = bilinear_sample(f_src, coords);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      out.validity.at(bin, y, x, 0) = s.mask.at(y, x, 0);
      if (s.mask.at(y, x, 0) <= 0.0) continue;
      for (int c = 0; c < C; ++c) out.values.at(bin, y, x, c) = s.values.at(y, x, c);
    }
}

}  // namespace detail

/// Temporal volume: the previous-frame feature warped to the current
/// frame at every hypothesis. cam_pose maps current-camera points into
/// the previous-frame camera. An identity pose reproduces f_prev
/// bit-exactly at every bin.
inline FeatureVolume build_temporal(const Grid2D& f_t, const Grid2D& f_prev,
                                    const RigidPose& cam_pose, const CameraIntrinsics& k,
                                    const DepthHypothesisSet& hyps) {
  if (!f_t.same_shape(f_prev))
    throw std::invalid_argument("build_temporal: feature shape mismatch");
  if (hyps.height != f_t.height || hyps.width != f_t.width)
    throw std::invalid_argument("build_temporal: hypothesis resolution mismatch");
  FeatureVolume v{Grid3D(hyps.bins, f_t.height, f_t.width, f_t.channels),
                  Grid3D(hyps.bins, f_t.height, f_t.width, 1), VolumeSource::kTemporal};
  for (int i = 0; i < hyps.bins; ++i)
    detail::sweep_bin(f_prev, cam_pose, k, k, hyps, i, v);
  return v;
}

/// Spatial volume: left/right neighbor features warped into camera c's
/// frustum and combined by a validity-weighted mean. Cells visible to
/// neither neighbor have validity 0.
inline FeatureVolume build_spatial(const Grid2D& f_ref, const Grid2D& f_left,
                                   const Grid2D& f_right, const CameraRig& rig, int c,
                                   const DepthHypothesisSet& hyps) {
  if (!f_ref.same_shape(f_left) || !f_ref.same_shape(f_right))
    throw std::invalid_argument("build_spatial: feature shape mismatch");
  if (c < 0 || c >= rig.size()) throw std::out_of_range("build_spatial: camera index");
  const auto [cl, cr] = rig.adjacency[c];
  const CameraIntrinsics& k_ref = rig.cameras[c].intrinsics;

  const int H = f_ref.height, W = f_ref.width, C = f_ref.channels;
  FeatureVolume left{Grid3D(hyps.bins, H, W, C), Grid3D(hyps.bins, H, W, 1),
                     VolumeSource::kSpatial};
  FeatureVolume right{Grid3D(hyps.bins, H, W, C), Grid3D(hyps.bins, H, W, 1),
                      VolumeSource::kSpatial};
  const RigidPose rel_l = spatial_relative_pose(rig, c, cl);
  const RigidPose rel_r = spatial_relative_pose(rig, c, cr);
  for (int i = 0; i < hyps.bins; ++i) {
    detail::sweep_bin(f_left, rel_l, k_ref, rig.cameras[cl].intrinsics, hyps, i, left);
    detail::sweep_bin(f_right, rel_r, k_ref, rig.cameras[cr].intrinsics, hyps, i, right);
  }

  FeatureVolume v{Grid3D(hyps.bins, H, W, C), Grid3D(hyps.bins, H, W, 1),
                  VolumeSource::kSpatial};
  for (int i = 0; i < hyps.bins; ++i)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double ml = left.validity.at(i, y, x, 0);
        const double mr = right.validity.at(i, y, x, 0);
        const double wsum = ml + mr;
        if (wsum <= 0.0) continue;
        for (int ch = 0; ch < C; ++ch)
          v.values.at(i, y, x, ch) =
              (ml * left.values.at(i, y, x, ch) + mr * right.values.at(i, y, x, ch)) / wsum;
        v.validity.at(i, y, x, 0) = std::max(ml, mr);
      }
  return v;
}

}  // namespace m2d
