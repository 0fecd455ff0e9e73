#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "m2d/grid.hpp"

namespace m2d {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline Grid2D sigmoid(const Grid2D& g) {
  Grid2D out = g;
  for (double& v : out.data) v = sigmoid(v);
  return out;
}

inline Grid2D relu(const Grid2D& g) {
  Grid2D out = g;
  for (double& v : out.data) v = relu(v);
  return out;
}

/// Softmax over the depth-bin axis, independently per (pixel, channel).
inline Grid3D softmax_over_bins(const Grid3D& v) {
  Grid3D out(v.depth_bins, v.height, v.width, v.channels);
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x)
      for (int c = 0; c < v.channels; ++c) {
        double m = v.at(0, y, x, c);
        for (int i = 1; i < v.depth_bins; ++i) m = std::max(m, v.at(i, y, x, c));
        double z = 0.0;
        for (int i = 0; i < v.depth_bins; ++i) {
          double e = std::exp(v.at(i, y, x, c) - m);
          out.at(i, y, x, c) = e;
          z += e;
        }
        for (int i = 0; i < v.depth_bins; ++i) out.at(i, y, x, c) /= z;
      }
  return out;
}

struct SampleResult {
  Grid2D values;  // h x w x src.channels
  Grid2D mask;    // h x w x 1, 1 = valid
};

/// Bilinear sampling of `src` at per-pixel continuous coordinates.
/// `coords` is h x w x 2 holding (x, y). Coordinates outside
/// [0, W-1] x [0, H-1] are invalid and sample to 0. Exact on integer
/// coordinates: the weight-0 neighbor never contributes, so an
/// integer coordinate returns that pixel's value bit-for-bit.
inline SampleResult bilinear_sample(const Grid2D& src, const Grid2D& coords) {
  if (coords.channels != 2)
    throw std::invalid_argument("bilinear_sample: coords must have 2 channels");
  SampleResult r{Grid2D(coords.height, coords.width, src.channels),
                 Grid2D(coords.height, coords.width, 1)};
  const int W = src.width, H = src.height, C = src.channels;
  for (int y = 0; y < coords.height; ++y)
    for (int x = 0; x < coords.width; ++x) {
      const double sx = coords.at(y, x, 0);
      const double sy = coords.at(y, x, 1);
      if (!(sx >= 0.0 && sx <= W - 1 && sy >= 0.0 && sy <= H - 1)) continue;
      const int x0 = std::min(static_cast<int>(sx), W - 1);
      const int y0 = std::min(static_cast<int>(sy), H - 1);
      const double tx = sx - x0;
      const double ty = sy - y0;
      const int x1 = tx > 0.0 ? x0 + 1 : x0;
      const int y1 = ty > 0.0 ? y0 + 1 : y0;
      for (int c = 0; c < C; ++c) {
        const double top = src.at(y0, x0, c) + tx * (src.at(y0, x1, c) - src.at(y0, x0, c));
        const double bot = src.at(y1, x0, c) + tx * (src.at(y1, x1, c) - src.at(y1, x0, c));
        r.values.at(y, x, c) = top + ty * (bot - top);
      }
      r.mask.at(y, x, 0) = 1.0;
    }
  return r;
}

/// 3x3 convolution with replicate-edge padding; output keeps the
/// input height/width and has kernel.out_channels channels.
inline Grid2D conv3x3(const Grid2D& src, const ConvKernel3x3& k) {
  if (src.channels != k.in_channels)
    throw std::invalid_argument("conv3x3: channel mismatch");
  Grid2D out(src.height, src.width, k.out_channels);
  const int H = src.height, W = src.width;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      for (int oc = 0; oc < k.out_channels; ++oc)
        out.at(y, x, oc) = k.bias[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, H - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(x + kx - 1, 0, W - 1);
          for (int ic = 0; ic < k.in_channels; ++ic) {
            const double v = src.at(sy, sx, ic);
            for (int oc = 0; oc < k.out_channels; ++oc)
              out.at(y, x, oc) += v * k.w(ky, kx, ic, oc);
          }
        }
      }
    }
  return out;
}

/// Adjoint of conv3x3 with respect to its input: scatters the output
/// cotangent back through the same replicate-padded taps.
inline Grid2D conv3x3_backward_input(const Grid2D& grad_out, const ConvKernel3x3& k) {
  if (grad_out.channels != k.out_channels)
    throw std::invalid_argument("conv3x3_backward_input: channel mismatch");
  Grid2D grad_in(grad_out.height, grad_out.width, k.in_channels);
  const int H = grad_out.height, W = grad_out.width;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, H - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(x + kx - 1, 0, W - 1);
          for (int ic = 0; ic < k.in_channels; ++ic) {
            double acc = 0.0;
            for (int oc = 0; oc < k.out_channels; ++oc)
              acc += grad_out.at(y, x, oc) * k.w(ky, kx, ic, oc);
            grad_in.at(sy, sx, ic) += acc;
          }
        }
      }
  return grad_in;
}

struct WindowStats {
  Grid2D mean_a, mean_b, var_a, var_b, cov;
};

/// Per-pixel 3x3 box-filter statistics of a pair of grids, replicate
/// padding, computed per channel.
inline WindowStats window_stats(const Grid2D& a, const Grid2D& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("window_stats: shape mismatch");
  WindowStats s{Grid2D(a.height, a.width, a.channels), Grid2D(a.height, a.width, a.channels),
                Grid2D(a.height, a.width, a.channels), Grid2D(a.height, a.width, a.channels),
                Grid2D(a.height, a.width, a.channels)};
  const int H = a.height, W = a.width;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < a.channels; ++c) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, H - 1);
            const int xx = std::clamp(x + dx, 0, W - 1);
            const double va = a.at(yy, xx, c);
            const double vb = b.at(yy, xx, c);
            sa += va; sb += vb;
            saa += va * va; sbb += vb * vb; sab += va * vb;
          }
        const double ma = sa / 9.0, mb = sb / 9.0;
        s.mean_a.at(y, x, c) = ma;
        s.mean_b.at(y, x, c) = mb;
        s.var_a.at(y, x, c) = saa / 9.0 - ma * ma;
        s.var_b.at(y, x, c) = sbb / 9.0 - mb * mb;
        s.cov.at(y, x, c) = sab / 9.0 - ma * mb;
      }
  return s;
}

/// Horizontal/vertical Sobel responses, channel-averaged, replicate padding.
inline void sobel(const Grid2D& g, Grid2D& gx, Grid2D& gy) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  gx = Grid2D(g.height, g.width, 1);
  gy = Grid2D(g.height, g.width, 1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double ax = 0, ay = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, g.height - 1);
          const int xx = std::clamp(x + dx, 0, g.width - 1);
          double v = 0;
          for (int c = 0; c < g.channels; ++c) v += g.at(yy, xx, c);
          v /= g.channels;
          ax += v * kx[dy + 1][dx + 1];
          ay += v * ky[dy + 1][dx + 1];
        }
      gx.at(y, x, 0) = ax / 8.0;
      gy.at(y, x, 0) = ay / 8.0;
    }
}

inline Grid2D sobel_magnitude(const Grid2D& g) {
  Grid2D gx, gy;
  sobel(g, gx, gy);
  Grid2D m(g.height, g.width, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = std::hypot(gx.data[i], gy.data[i]);
  return m;
}

/// Channel-averaged grayscale.
inline Grid2D grayscale(const Grid2D& img) {
  Grid2D g(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
      g.at(y, x, 0) = s / img.channels;
    }
  return g;
}

/// Average pooling by an integer factor; trailing partial windows clamp
/// to the image border so output size is ceil(dim / factor).
inline Grid2D avg_pool(const Grid2D& g, int factor) {
  if (factor <= 0) throw std::invalid_argument("avg_pool: nonpositive factor");
  const int H = (g.height + factor - 1) / factor;
  const int W = (g.width + factor - 1) / factor;
  Grid2D out(H, W, g.channels);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < g.channels; ++c) {
        double s = 0;
        int n = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) {
            const int yy = y * factor + dy, xx = x * factor + dx;
            if (yy >= g.height || xx >= g.width) continue;
            s += g.at(yy, xx, c);
            ++n;
          }
        out.at(y, x, c) = s / n;
      }
  return out;
}

}  // namespace m2d
