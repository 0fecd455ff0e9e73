#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace m2d {

/// Dense 2D value grid, row-major with channels innermost:
/// index(y, x, ch) = (y * width + x) * channels + ch.
struct Grid2D {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("Grid2D: nonpositive shape");
  }

  std::size_t index(int y, int x, int ch) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + ch;
  }
  double& at(int y, int x, int ch) { return data[index(y, x, ch)]; }
  double at(int y, int x, int ch) const { return data[index(y, x, ch)]; }

  bool same_shape(const Grid2D& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t size() const { return data.size(); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Dense 3D value grid over depth bins, row-major:
/// index(i, y, x, ch) = ((i * height + y) * width + x) * channels + ch.
struct Grid3D {
  int depth_bins = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Grid3D() = default;
  Grid3D(int d, int h, int w, int c, double fill = 0.0)
      : depth_bins(d), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(d) * h * w * c, fill) {
    if (d <= 0 || h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("Grid3D: nonpositive shape");
  }

  std::size_t index(int i, int y, int x, int ch) const {
    return ((static_cast<std::size_t>(i) * height + y) * width + x) * channels + ch;
  }
  double& at(int i, int y, int x, int ch) { return data[index(i, y, x, ch)]; }
  double at(int i, int y, int x, int ch) const { return data[index(i, y, x, ch)]; }

  bool same_shape(const Grid3D& o) const {
    return depth_bins == o.depth_bins && height == o.height &&
           width == o.width && channels == o.channels;
  }
  std::size_t size() const { return data.size(); }

  /// Slice at bin i as a Grid2D copy.
  Grid2D slice(int i) const {
    Grid2D s(height, width, channels);
    const std::size_t n = static_cast<std::size_t>(height) * width * channels;
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(i * n),
              data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n),
              s.data.begin());
    return s;
  }
};

/// 3x3 convolution kernel bank. Weight layout: w(ky, kx, ic, oc).
/// Padding behavior is fixed to replicate-edge (see conv3x3).
struct ConvKernel3x3 {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;  // 3*3*in*out
  std::vector<double> bias;     // out

  ConvKernel3x3() = default;
  ConvKernel3x3(int ic, int oc)
      : in_channels(ic), out_channels(oc),
        weights(static_cast<std::size_t>(9) * ic * oc, 0.0), bias(oc, 0.0) {
    if (ic <= 0 || oc <= 0)
      throw std::invalid_argument("ConvKernel3x3: nonpositive channels");
  }

  std::size_t windex(int ky, int kx, int ic, int oc) const {
    return ((static_cast<std::size_t>(ky) * 3 + kx) * in_channels + ic) * out_channels + oc;
  }
  double& w(int ky, int kx, int ic, int oc) { return weights[windex(ky, kx, ic, oc)]; }
  double w(int ky, int kx, int ic, int oc) const { return weights[windex(ky, kx, ic, oc)]; }

  /// Kernel that passes channel i of the input straight to output i.
  static ConvKernel3x3 identity(int channels) {
    ConvKernel3x3 k(channels, channels);
    for (int c = 0; c < channels; ++c) k.w(1, 1, c, c) = 1.0;
    return k;
  }
};

/// Per-pixel metric depth with a validity mask in [0,1].
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<double> depth;
  std::vector<double> validity;

  DepthMap() = default;
  DepthMap(int h, int w, double fill = 0.0, double valid = 1.0)
      : height(h), width(w),
        depth(static_cast<std::size_t>(h) * w, fill),
        validity(static_cast<std::size_t>(h) * w, valid) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("DepthMap: nonpositive shape");
  }

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  double& at(int y, int x) { return depth[index(y, x)]; }
  double at(int y, int x) const { return depth[index(y, x)]; }
  double& valid_at(int y, int x) { return validity[index(y, x)]; }
  double valid_at(int y, int x) const { return validity[index(y, x)]; }

  bool same_shape(const DepthMap& o) const {
    return height == o.height && width == o.width;
  }
  std::size_t size() const { return depth.size(); }
};

}  // namespace m2d
