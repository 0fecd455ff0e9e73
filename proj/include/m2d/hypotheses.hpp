#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"

namespace m2d {

enum class SamplingMode { kVanilla, kFixed, kAdaptive };
enum class SampleSpacing { kInverseDepth, kLinear };

inline SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "vanilla") return SamplingMode::kVanilla;
  if (s == "fixed") return SamplingMode::kFixed;
  if (s == "adaptive") return SamplingMode::kAdaptive;
  throw std::invalid_argument("unknown sampling mode: " + s);
}

inline SampleSpacing spacing_from_string(const std::string& s) {
  if (s == "inverse_depth") return SampleSpacing::kInverseDepth;
  if (s == "linear") return SampleSpacing::kLinear;
  throw std::invalid_argument("unknown sample spacing: " + s);
}

/// Per-pixel depth samples, monotone increasing along the bin axis.
struct DepthHypothesisSet {
  int bins = 0;
  int height = 0;
  int width = 0;
  SamplingMode mode = SamplingMode::kAdaptive;
  std::vector<double> samples;  // (i * height + y) * width + x

  DepthHypothesisSet() = default;
  DepthHypothesisSet(int d, int h, int w, SamplingMode m)
      : bins(d), height(h), width(w), mode(m),
        samples(static_cast<std::size_t>(d) * h * w, 0.0) {
    if (d <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("DepthHypothesisSet: nonpositive shape");
  }

  std::size_t index(int i, int y, int x) const {
    return (static_cast<std::size_t>(i) * height + y) * width + x;
  }
  double& at(int i, int y, int x) { return samples[index(i, y, x)]; }
  double at(int i, int y, int x) const { return samples[index(i, y, x)]; }
};

/// Per-pixel sampling range.
struct DepthRange {
  int height = 0;
  int width = 0;
  std::vector<double> d_min;
  std::vector<double> d_max;

  DepthRange() = default;
  DepthRange(int h, int w)
      : height(h), width(w),
        d_min(static_cast<std::size_t>(h) * w, 0.0),
        d_max(static_cast<std::size_t>(h) * w, 0.0) {}
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Adaptive sampling range around a prior: [d/(1+alpha), d*(1+alpha)]
/// per pixel. The prior is clamped to [clamp_lo, clamp_hi] first so a
/// degenerate prior cannot produce an empty or runaway range.
inline DepthRange adaptive_range(const DepthMap& d_init, double alpha, double clamp_lo = kZMin,
                                 double clamp_hi = std::numeric_limits<double>::infinity()) {
  if (alpha < 0.0) throw std::invalid_argument("adaptive_range: negative alpha");
  DepthRange r(d_init.height, d_init.width);
  for (int y = 0; y < d_init.height; ++y)
    for (int x = 0; x < d_init.width; ++x) {
      const std::size_t i = r.index(y, x);
      double d = d_init.at(y, x);
      if (d_init.valid_at(y, x) > 0.0 && d <= 0.0)
        throw std::invalid_argument("adaptive_range: nonpositive prior at valid pixel");
      d = std::clamp(d, clamp_lo, clamp_hi);
      r.d_min[i] = d / (1.0 + alpha);
      r.d_max[i] = d * (1.0 + alpha);
    }
  return r;
}

/// Whole-scene range, identical at every pixel.
inline DepthRange vanilla_range(int height, int width, double scene_min, double scene_max) {
  if (!(scene_min > 0.0 && scene_min < scene_max))
    throw std::invalid_argument("vanilla_range: need 0 < scene_min < scene_max");
  DepthRange r(height, width);
  std::fill(r.d_min.begin(), r.d_min.end(), scene_min);
  std::fill(r.d_max.begin(), r.d_max.end(), scene_max);
  return r;
}

/// D samples per pixel across the given range. Inverse-depth spacing
/// places 1/d uniformly; sample 0 is d_min and sample D-1 is d_max.
/// D = 1 degenerates to the geometric (inverse) or arithmetic (linear)
/// midpoint. Linear samples are clamped up to kZMin.
inline DepthHypothesisSet generate(const DepthRange& range, int bins, SampleSpacing spacing,
                                   SamplingMode mode = SamplingMode::kAdaptive) {
  if (bins <= 0) throw std::invalid_argument("generate: bins must be >= 1");
  DepthHypothesisSet set(bins, range.height, range.width, mode);
  for (int y = 0; y < range.height; ++y)
    for (int x = 0; x < range.width; ++x) {
      const std::size_t p = range.index(y, x);
      double lo = range.d_min[p];
      const double hi = range.d_max[p];
      if (!(lo >= 0.0) || lo > hi || !(hi > 0.0))
        throw std::invalid_argument("generate: invalid range (need 0 <= d_min <= d_max, d_max > 0)");
      if (spacing == SampleSpacing::kInverseDepth) lo = std::max(lo, kZMin);
      if (bins == 1) {
        set.at(0, y, x) = spacing == SampleSpacing::kInverseDepth
                              ? std::sqrt(lo * hi)
                              : std::max(kZMin, 0.5 * (lo + hi));
        continue;
      }
      if (spacing == SampleSpacing::kInverseDepth) {
        const double inv_lo = 1.0 / lo, inv_hi = 1.0 / hi;
        for (int i = 0; i < bins; ++i) {
          const double t = static_cast<double>(i) / (bins - 1);
          set.at(i, y, x) = 1.0 / (inv_lo + t * (inv_hi - inv_lo));
        }
        set.at(0, y, x) = lo;
        set.at(bins - 1, y, x) = hi;
      } else {
        for (int i = 0; i < bins; ++i) {
          const double t = static_cast<double>(i) / (bins - 1);
          set.at(i, y, x) = std::max(kZMin, lo + t * (hi - lo));
        }
      }
    }
  return set;
}

}  // namespace m2d
