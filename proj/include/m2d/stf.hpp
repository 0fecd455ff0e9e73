#pragma once

#include <atomic>
#include <stdexcept>
#include <string>

#include "m2d/grid.hpp"
#include "m2d/hypotheses.hpp"
#include "m2d/volumes.hpp"

namespace m2d {

enum class StfMode { kOn, kOff, kSpatialOnly, kTemporalOnly };

inline StfMode stf_mode_from_string(const std::string& s) {
  if (s == "on") return StfMode::kOn;
  if (s == "off") return StfMode::kOff;
  if (s == "spatial_only") return StfMode::kSpatialOnly;
  if (s == "temporal_only") return StfMode::kTemporalOnly;
  throw std::invalid_argument("unknown stf mode: " + s);
}

/// Group-wise correlations per (bin, pixel, group). Invalid cells keep
/// value 0 and are excluded downstream through the validity mask.
struct CorrelationMap {
  Grid3D values;    // D x H x W x G
  Grid3D validity;  // D x H x W x 1
  int groups = 0;
};

/// Cr^g(p, i) = (G/C) * <F(p)^g, V(p, i)^g> with channels split evenly
/// into G groups.
inline CorrelationMap group_correlation(const Grid2D& f, const FeatureVolume& v, int groups) {
  const int C = f.channels;
  if (groups <= 0 || C % groups != 0)
    throw std::invalid_argument("group_correlation: groups must divide channels");
  if (f.height != v.values.height || f.width != v.values.width || C != v.values.channels)
    throw std::invalid_argument("group_correlation: shape mismatch");
  const int D = v.values.depth_bins, H = f.height, W = f.width;
  const int per_group = C / groups;
  const double scale = static_cast<double>(groups) / C;
  CorrelationMap cr{Grid3D(D, H, W, groups), v.validity, groups};
  for (int i = 0; i < D; ++i)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (v.validity.at(i, y, x, 0) <= 0.0) continue;
        for (int g = 0; g < groups; ++g) {
          double dot = 0.0;
          for (int c = g * per_group; c < (g + 1) * per_group; ++c)
            dot += f.at(y, x, c) * v.values.at(i, y, x, c);
          cr.values.at(i, y, x, g) = scale * dot;
        }
      }
  return cr;
}

/// Fuse weight per (bin, pixel): the maximum correlation along the
/// group dimension. Invalid cells get weight 0.
inline Grid3D fusion_weights(const CorrelationMap& cr) {
  const int D = cr.values.depth_bins, H = cr.values.height, W = cr.values.width;
  Grid3D w(D, H, W, 1);
  for (int i = 0; i < D; ++i)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (cr.validity.at(i, y, x, 0) <= 0.0) continue;
        double m = cr.values.at(i, y, x, 0);
        for (int g = 1; g < cr.groups; ++g) m = std::max(m, cr.values.at(i, y, x, g));
        w.at(i, y, x, 0) = m;
      }
  return w;
}

inline void fusion_weights(const CorrelationMap& cr_sp, const CorrelationMap& cr_tp,
                           Grid3D& w_sp, Grid3D& w_tp) {
  if (!cr_sp.values.same_shape(cr_tp.values))
    throw std::invalid_argument("fusion_weights: shape mismatch");
  w_sp = fusion_weights(cr_sp);
  w_tp = fusion_weights(cr_tp);
}

/// V = W_sp * V_sp + W_tp * V_tp, cell-wise. Fused validity follows the
/// volumes that actually contribute (nonzero weight and valid cell).
inline FeatureVolume fuse(const FeatureVolume& v_sp, const FeatureVolume& v_tp,
                          const Grid3D& w_sp, const Grid3D& w_tp) {
  if (!v_sp.same_shape(v_tp)) throw std::invalid_argument("fuse: volume shape mismatch");
  const int D = v_sp.values.depth_bins, H = v_sp.values.height, W = v_sp.values.width;
  const int C = v_sp.values.channels;
  FeatureVolume out{Grid3D(D, H, W, C), Grid3D(D, H, W, 1), VolumeSource::kTemporal};
  for (int i = 0; i < D; ++i)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double a = w_sp.at(i, y, x, 0);
        const double b = w_tp.at(i, y, x, 0);
        for (int c = 0; c < C; ++c)
          out.values.at(i, y, x, c) =
              a * v_sp.values.at(i, y, x, c) + b * v_tp.values.at(i, y, x, c);
        const double vs = v_sp.validity.at(i, y, x, 0) * (a != 0.0 ? 1.0 : 0.0);
        const double vt = v_tp.validity.at(i, y, x, 0) * (b != 0.0 ? 1.0 : 0.0);
        out.validity.at(i, y, x, 0) = std::max(vs, vt);
      }
  return out;
}

/// Probability distribution over depth bins per pixel. Pixels where
/// every bin is invalid fall back to uniform and are flagged invalid.
struct ProbabilityVolume {
  Grid3D prob;        // D x H x W x 1
  Grid2D pixel_valid; // H x W x 1

  int bins() const { return prob.depth_bins; }
};

/// Correlation scoring head: score(p, i) is the mean group correlation
/// between F(p) and the volume cell, and the probability is a masked
/// softmax of score / tau over the valid bins.
inline ProbabilityVolume matching_head(const Grid2D& f, const FeatureVolume& v, int groups,
                                       double tau) {
  if (tau <= 0.0) throw std::invalid_argument("matching_head: tau must be positive");
  const CorrelationMap cr = group_correlation(f, v, groups);
  const int D = cr.values.depth_bins, H = cr.values.height, W = cr.values.width;
  ProbabilityVolume out{Grid3D(D, H, W, 1), Grid2D(H, W, 1)};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double best = -std::numeric_limits<double>::infinity();
      int n_valid = 0;
      for (int i = 0; i < D; ++i) {
        if (cr.validity.at(i, y, x, 0) <= 0.0) continue;
        double s = 0.0;
        for (int g = 0; g < groups; ++g) s += cr.values.at(i, y, x, g);
        s /= groups * tau;
        out.prob.at(i, y, x, 0) = s;
        best = std::max(best, s);
        ++n_valid;
      }
      if (n_valid == 0) {
        for (int i = 0; i < D; ++i) out.prob.at(i, y, x, 0) = 1.0 / D;
        continue;
      }
      double z = 0.0;
      for (int i = 0; i < D; ++i) {
        if (cr.validity.at(i, y, x, 0) <= 0.0) continue;
        const double e = std::exp(out.prob.at(i, y, x, 0) - best);
        out.prob.at(i, y, x, 0) = e;
        z += e;
      }
      for (int i = 0; i < D; ++i) {
        if (cr.validity.at(i, y, x, 0) <= 0.0) {
          out.prob.at(i, y, x, 0) = 0.0;
          continue;
        }
        out.prob.at(i, y, x, 0) /= z;
      }
      out.pixel_valid.at(y, x, 0) = 1.0;
    }
  return out;
}

/// d(p) = sum_i d_i * P(p, i).
inline DepthMap depth_expectation(const ProbabilityVolume& prob, const DepthHypothesisSet& hyps) {
  if (prob.prob.depth_bins != hyps.bins || prob.prob.height != hyps.height ||
      prob.prob.width != hyps.width)
    throw std::invalid_argument("depth_expectation: shape mismatch");
  DepthMap d(hyps.height, hyps.width);
  for (int y = 0; y < hyps.height; ++y)
    for (int x = 0; x < hyps.width; ++x) {
      double e = 0.0;
      for (int i = 0; i < hyps.bins; ++i) e += hyps.at(i, y, x) * prob.prob.at(i, y, x, 0);
      d.at(y, x) = e;
      d.valid_at(y, x) = prob.pixel_valid.at(y, x, 0);
    }
  return d;
}

/// Convex-upsampling mask: for each coarse pixel and each of the
/// factor x factor output subpixels, 9 weights over the 3x3 coarse
/// neighborhood. Rows are expected to sum to 1.
struct UpsampleMask {
  int height = 0;  // coarse
  int width = 0;
  int factor = 4;
  std::vector<double> weights;  // ((y*W + x)*factor^2 + (sy*factor+sx))*9 + k

  UpsampleMask() = default;
  UpsampleMask(int h, int w, int f)
      : height(h), width(w), factor(f),
        weights(static_cast<std::size_t>(h) * w * f * f * 9, 0.0) {}

  std::size_t index(int y, int x, int sy, int sx, int k) const {
    return ((static_cast<std::size_t>(y) * width + x) * factor * factor +
            (static_cast<std::size_t>(sy) * factor + sx)) * 9 + k;
  }
  double& at(int y, int x, int sy, int sx, int k) { return weights[index(y, x, sy, sx, k)]; }
  double at(int y, int x, int sy, int sx, int k) const {
    return weights[index(y, x, sy, sx, k)];
  }
};

/// Bilinear-equivalent mask: the weights an ordinary bilinear x-factor
/// upsampler would use, expressed over the 3x3 neighborhood.
inline UpsampleMask bilinear_upsample_mask(int height, int width, int factor) {
  UpsampleMask m(height, width, factor);
  for (int sy = 0; sy < factor; ++sy)
    for (int sx = 0; sx < factor; ++sx) {
      const double oy = (sy + 0.5) / factor - 0.5;
      const double ox = (sx + 0.5) / factor - 0.5;
      double wy[3] = {oy < 0 ? -oy : 0.0, 1.0 - std::abs(oy), oy > 0 ? oy : 0.0};
      double wx[3] = {ox < 0 ? -ox : 0.0, 1.0 - std::abs(ox), ox > 0 ? ox : 0.0};
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              m.at(y, x, sy, sx, ky * 3 + kx) = wy[ky] * wx[kx];
    }
  return m;
}

/// Count of mask rows that had to be renormalized; exposed so callers
/// can surface misbehaving external masks.
inline std::atomic<std::uint64_t>& upsample_renormalize_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

/// Each fine pixel is a convex combination of its 3x3 coarse
/// neighborhood (replicate at borders) using the mask row for its
/// subpixel position. Non-normalized rows are renormalized and counted.
inline DepthMap convex_upsample(const DepthMap& coarse, const UpsampleMask& mask) {
  if (mask.height != coarse.height || mask.width != coarse.width)
    throw std::invalid_argument("convex_upsample: mask resolution mismatch");
  const int f = mask.factor;
  DepthMap fine(coarse.height * f, coarse.width * f);
  for (int y = 0; y < coarse.height; ++y)
    for (int x = 0; x < coarse.width; ++x)
      for (int sy = 0; sy < f; ++sy)
        for (int sx = 0; sx < f; ++sx) {
          double wsum = 0.0;
          for (int k = 0; k < 9; ++k) wsum += mask.at(y, x, sy, sx, k);
          double renorm = 1.0;
          if (std::abs(wsum - 1.0) > 1e-12) {
            if (wsum <= 0.0)
              throw std::invalid_argument("convex_upsample: mask row sums to zero");
            renorm = 1.0 / wsum;
            upsample_renormalize_count().fetch_add(1, std::memory_order_relaxed);
          }
          double v = 0.0, valid = 0.0;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = std::clamp(y + ky - 1, 0, coarse.height - 1);
              const int xx = std::clamp(x + kx - 1, 0, coarse.width - 1);
              const double w = mask.at(y, x, sy, sx, ky * 3 + kx) * renorm;
              v += w * coarse.at(yy, xx);
              valid += w * coarse.valid_at(yy, xx);
            }
          fine.at(y * f + sy, x * f + sx) = v;
          fine.valid_at(y * f + sy, x * f + sx) = valid;
        }
  return fine;
}

}  // namespace m2d
