#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"
#include "m2d/image_ops.hpp"

namespace m2d {

/// Per-pixel structural similarity, 3x3 box window, replicate padding,
/// C1 = 0.01^2, C2 = 0.03^2, averaged over channels.
inline Grid2D ssim(const Grid2D& a, const Grid2D& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const WindowStats st = window_stats(a, b);
  Grid2D out(a.height, a.width, 1);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      double acc = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        const double ma = st.mean_a.at(y, x, c), mb = st.mean_b.at(y, x, c);
        const double va = st.var_a.at(y, x, c), vb = st.var_b.at(y, x, c);
        const double cov = st.cov.at(y, x, c);
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
      out.at(y, x, 0) = acc / a.channels;
    }
  return out;
}

struct MaskedScalar {
  double value = 0.0;
  std::size_t n_valid = 0;
};

/// Photometric error (alpha/2)(1 - SSIM) + (1 - alpha) L1, averaged
/// over pixels with mask > 0. An empty mask yields value 0 with a zero
/// valid count; the caller decides what that means.
inline MaskedScalar photometric_loss(const Grid2D& target, const Grid2D& reconstructed,
                                     const Grid2D& mask, double alpha) {
  if (!target.same_shape(reconstructed))
    throw std::invalid_argument("photometric_loss: shape mismatch");
  if (mask.height != target.height || mask.width != target.width || mask.channels != 1)
    throw std::invalid_argument("photometric_loss: bad mask shape");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("photometric_loss: alpha in [0,1]");
  const Grid2D sim = ssim(target, reconstructed);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      if (mask.at(y, x, 0) <= 0.0) continue;
      double l1 = 0.0;
      for (int c = 0; c < target.channels; ++c)
        l1 += std::abs(target.at(y, x, c) - reconstructed.at(y, x, c));
      l1 /= target.channels;
      sum += 0.5 * alpha * (1.0 - sim.at(y, x, 0)) + (1.0 - alpha) * l1;
      ++n;
    }
  return {n > 0 ? sum / n : 0.0, n};
}

struct Reconstruction {
  Grid2D image;
  Grid2D mask;  // H x W x 1
};

/// Inverse-warp the source image into the target frame: each target
/// pixel looks up the source at its warp under the predicted depth.
/// target_to_source maps target-camera points into the source camera.
inline Reconstruction reconstruct_view(const Grid2D& source_image, const DepthMap& target_depth,
                                       const RigidPose& target_to_source,
                                       const CameraIntrinsics& k_target,
                                       const CameraIntrinsics& k_source) {
  if (source_image.height != target_depth.height || source_image.width != target_depth.width)
    throw std::invalid_argument("reconstruct_view: resolution mismatch");
  const int H = target_depth.height, W = target_depth.width;
  Grid2D coords(H, W, 2, -1.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double d = target_depth.at(y, x);
      if (target_depth.valid_at(y, x) <= 0.0 || d <= 0.0) continue;
      const WarpResult wr = warp_pixel({static_cast<double>(x), static_cast<double>(y)}, d,
                                       k_target, k_source, target_to_source, W, H);
      if (!wr.valid) continue;
      coords.at(y, x, 0) = wr.pixel.x;
      coords.at(y, x, 1) = wr.pixel.y;
    }
  SampleResult s = bilinear_sample(source_image, coords);
  return {std::move(s.values), std::move(s.mask)};
}

/// Edge-aware smoothness: mean |dx d'| e^{-|dx I|} + mean |dy d'| e^{-|dy I|}
/// with forward differences and channel-averaged image gradients.
/// By default the depth is mean-normalized first, which makes the term
/// invariant to global depth scale; normalize=false evaluates the raw
/// form.
inline double smoothness_loss(const DepthMap& depth, const Grid2D& image, bool normalize = true) {
  if (image.height != depth.height || image.width != depth.width)
    throw std::invalid_argument("smoothness_loss: resolution mismatch");
  const int H = depth.height, W = depth.width;
  double norm = 1.0;
  if (normalize) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (depth.valid_at(y, x) > 0.0) {
          sum += depth.at(y, x);
          ++n;
        }
    if (n == 0 || sum == 0.0) return 0.0;
    norm = sum / n;
  }
  auto image_grad = [&](int y, int x, int y2, int x2) {
    double g = 0.0;
    for (int c = 0; c < image.channels; ++c)
      g += std::abs(image.at(y2, x2, c) - image.at(y, x, c));
    return g / image.channels;
  };
  double sx = 0.0, sy = 0.0;
  std::size_t nx = 0, ny = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x + 1 < W; ++x) {
      const double dd = std::abs(depth.at(y, x + 1) / norm - depth.at(y, x) / norm);
      sx += dd * std::exp(-image_grad(y, x, y, x + 1));
      ++nx;
    }
  for (int y = 0; y + 1 < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double dd = std::abs(depth.at(y + 1, x) / norm - depth.at(y, x) / norm);
      sy += dd * std::exp(-image_grad(y, x, y + 1, x));
      ++ny;
    }
  return (nx ? sx / nx : 0.0) + (ny ? sy / ny : 0.0);
}

/// Binary image edges: Sobel magnitude thresholded at the given
/// percentile (default 90th), the stand-in for a pretrained detector.
inline Grid2D image_edges(const Grid2D& image, double percentile = 0.90) {
  Grid2D mag = sobel_magnitude(image);
  std::vector<double> sorted = mag.data;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = std::min(sorted.size() - 1,
                                 static_cast<std::size_t>(percentile * sorted.size()));
  const double thresh = sorted[k];
  Grid2D edges(image.height, image.width, 1);
  for (std::size_t i = 0; i < mag.data.size(); ++i)
    edges.data[i] = mag.data[i] > thresh ? 1.0 : 0.0;
  return edges;
}

/// Depth edge probability: Sobel magnitude of the depth map, max-
/// normalized and squashed into (0,1).
inline Grid2D depth_edge_probability(const DepthMap& depth, double eps = 1e-6) {
  Grid2D d(depth.height, depth.width, 1);
  d.data = depth.depth;
  Grid2D mag = sobel_magnitude(d);
  double peak = 0.0;
  for (double v : mag.data) peak = std::max(peak, v);
  Grid2D out(depth.height, depth.width, 1);
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    const double p = peak > 0.0 ? mag.data[i] / peak : 0.0;
    out.data[i] = std::clamp(p, eps, 1.0 - eps);
  }
  return out;
}

/// Focal loss between binary image edges and the depth edge
/// probability, mean over pixels.
inline double edge_loss(const Grid2D& image_edge_map, const DepthMap& depth, double gamma = 2.0,
                        double alpha_f = 0.25) {
  if (image_edge_map.height != depth.height || image_edge_map.width != depth.width ||
      image_edge_map.channels != 1)
    throw std::invalid_argument("edge_loss: bad edge map shape");
  const Grid2D pred = depth_edge_probability(depth);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double t = image_edge_map.data[i];
    if (t != 0.0 && t != 1.0) throw std::invalid_argument("edge_loss: edges must be binary");
    const double pt = t == 1.0 ? pred.data[i] : 1.0 - pred.data[i];
    const double at = t == 1.0 ? alpha_f : 1.0 - alpha_f;
    sum += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return sum / pred.data.size();
}

/// L_sfm = (1/|M|) sum |d(p) - d_sfm(p)| over the pseudo-label mask.
/// An empty mask is an error, distinct from a zero loss.
inline double sfm_loss(const DepthMap& depth, const DepthMap& pseudo) {
  if (!depth.same_shape(pseudo)) throw std::invalid_argument("sfm_loss: shape mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      if (pseudo.valid_at(y, x) <= 0.0) continue;
      sum += std::abs(depth.at(y, x) - pseudo.at(y, x));
      ++n;
    }
  if (n == 0) throw std::invalid_argument("sfm_loss: empty pseudo-label mask");
  return sum / n;
}

struct LossWeights {
  double photo = 1.0;
  double smooth = 1.0e-3;
  double edge = 1.0e-2;
  double sfm = 1.0e-2;  // zeroed after the initialization phase
};

enum class TrainPhase { kInit, kMain };

struct LossReport {
  double photo = 0.0;
  double photo_temporal = 0.0;
  double photo_spatial = 0.0;
  double smooth = 0.0;
  double edge = 0.0;
  double sfm = 0.0;
  double total = 0.0;
  std::size_t photo_valid = 0;
  std::size_t sfm_valid = 0;
};

/// Weighted total. The main phase forces the sfm weight to 0.
inline LossReport total_loss(LossReport terms, const LossWeights& w, TrainPhase phase) {
  const double w_sfm = phase == TrainPhase::kMain ? 0.0 : w.sfm;
  terms.total = w.photo * terms.photo + w.smooth * terms.smooth + w.edge * terms.edge +
                w_sfm * terms.sfm;
  return terms;
}

}  // namespace m2d
