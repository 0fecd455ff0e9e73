#pragma once

#include <memory>
#include <random>
#include <stdexcept>

#include "m2d/grid.hpp"
#include "m2d/image_ops.hpp"

namespace m2d {

/// Deterministic image -> feature map transform standing in for a
/// learned encoder. Providers must honor their declared scale and
/// channel count and be safe to call concurrently.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual Grid2D compute(const Grid2D& image) const = 0;
  virtual double scale() const = 0;
  virtual int channels() const = 0;
};

/// Local-patch photometric descriptor over the pooled grayscale:
/// mean-subtracted taps within radius 2, normalized per pixel to unit
/// RMS (with a floor that keeps flat regions quiet) and scaled by
/// `gain`. Inner products of these descriptors behave like normalized
/// cross-correlation, and `gain` sets the score scale the softmax
/// head sees.
class PhotometricSobelProvider : public FeatureProvider {
 public:
  PhotometricSobelProvider(int channels, int pool = 4, double gain = 1.0)
      : channels_(channels), pool_(pool), gain_(gain) {
    if (channels < 1) throw std::invalid_argument("provider: channels must be >= 1");
  }

  Grid2D compute(const Grid2D& image) const override {
    const Grid2D gray = avg_pool(grayscale(image), pool_);
    const int H = gray.height, W = gray.width;
    // even channels carry the center tap, odd channels walk a ring
    // elongated horizontally (the epipolar direction of the default
    // motion). Every two-channel correlation group shares the center
    // signal, so a max over groups stays close to their mean instead
    // of drifting toward high-variance misalignments.
    static const int ring[][2] = {{0, 1},  {0, -1}, {0, 2},  {0, -2},
                                  {0, 3},  {0, -3}, {1, 0},  {-1, 0},
                                  {1, 1},  {-1, -1}, {-1, 2}, {1, -2}};
    constexpr int kRingTaps = static_cast<int>(sizeof(ring) / sizeof(ring[0]));
    constexpr double kRmsFloor = 0.02;
    Grid2D f(H, W, channels_);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double center = gray.at(y, x, 0);
        double mean = center;
        const int n_ring = channels_ / 2;
        for (int k = 0; k < n_ring; ++k)
          mean += gray.at(std::clamp(y + ring[k % kRingTaps][0], 0, H - 1),
                          std::clamp(x + ring[k % kRingTaps][1], 0, W - 1), 0);
        mean /= n_ring + 1;
        // the doubled center keeps every group's correlation dominated
        // by the same well-behaved point signal
        double sq = 0.0;
        for (int c = 0; c < channels_; ++c) {
          const int k = (c / 2) % kRingTaps;
          const double v = (c % 2 == 0 ? 2.0 * (center - mean)
                                       : gray.at(std::clamp(y + ring[k][0], 0, H - 1),
                                                 std::clamp(x + ring[k][1], 0, W - 1), 0) -
                                             mean);
          f.at(y, x, c) = v;
          sq += v * v;
        }
        const double norm = gain_ / std::sqrt(sq / channels_ + kRmsFloor * kRmsFloor);
        for (int c = 0; c < channels_; ++c) f.at(y, x, c) *= norm;
      }
    return f;
  }
  double scale() const override { return 1.0 / pool_; }
  int channels() const override { return channels_; }

 private:
  int channels_;
  int pool_;
  double gain_;
};

/// Pooled local-variance texture energy, a cheap instance-boundary cue
/// standing in for semantic encoder features.
class LocalVarianceProvider : public FeatureProvider {
 public:
  LocalVarianceProvider(int channels, int pool = 4, double gain = 1.0)
      : channels_(channels), pool_(pool), gain_(gain) {
    if (channels < 1) throw std::invalid_argument("provider: channels must be >= 1");
  }

  Grid2D compute(const Grid2D& image) const override {
    const Grid2D gray = grayscale(image);
    const WindowStats st = window_stats(gray, gray);
    const Grid2D var = avg_pool(st.var_a, pool_);
    Grid2D f(var.height, var.width, channels_);
    for (int y = 0; y < var.height; ++y)
      for (int x = 0; x < var.width; ++x) {
        const double v = gain_ * std::sqrt(std::max(0.0, var.at(y, x, 0)));
        for (int c = 0; c < channels_; ++c) f.at(y, x, c) = v;
      }
    return f;
  }
  double scale() const override { return 1.0 / pool_; }
  int channels() const override { return channels_; }

 private:
  int channels_;
  int pool_;
  double gain_;
};

/// Fixed-feature provider, used for externally supplied encoder outputs.
class ConstantFeatureProvider : public FeatureProvider {
 public:
  ConstantFeatureProvider(Grid2D features, double scale)
      : features_(std::move(features)), scale_(scale) {}
  Grid2D compute(const Grid2D&) const override { return features_; }
  double scale() const override { return scale_; }
  int channels() const override { return features_.channels; }

 private:
  Grid2D features_;
  double scale_;
};

struct MffKernels {
  ConvKernel3x3 k1, k2, k3;
};

/// Default reproducible seed for MFF kernel initialization.
inline constexpr std::uint64_t kMffKernelSeed = 0x6d326466u;  // "m2df"

/// Seeded kernel initialization: k1/k2 small zero-mean weights for the
/// attention branch, k3 an identity pass-through with small noise so
/// the fused feature keeps photometric content.
inline MffKernels make_seeded_kernels(int channels, std::uint64_t seed = kMffKernelSeed,
                                      double attn_std = 0.3, double fuse_std = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> attn(0.0, attn_std / std::sqrt(9.0 * channels));
  std::normal_distribution<double> fuse(0.0, fuse_std / std::sqrt(9.0 * channels));
  MffKernels k{ConvKernel3x3(channels, channels), ConvKernel3x3(channels, channels),
               ConvKernel3x3(channels, channels)};
  for (double& w : k.k1.weights) w = attn(rng);
  for (double& w : k.k2.weights) w = attn(rng);
  for (double& w : k.k3.weights) w = fuse(rng);
  for (int c = 0; c < channels; ++c) k.k3.w(1, 1, c, c) += 1.0;
  return k;
}

inline Grid2D add(const Grid2D& a, const Grid2D& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  Grid2D out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Grid2D hadamard(const Grid2D& a, const Grid2D& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
  Grid2D out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

/// Attention weights W = sigmoid(k2 * relu(k1 * (C + S))).
inline Grid2D attn_weights(const Grid2D& c_feat, const Grid2D& s_feat, const ConvKernel3x3& k1,
                           const ConvKernel3x3& k2) {
  if (!c_feat.same_shape(s_feat)) throw std::invalid_argument("attn_weights: shape mismatch");
  return sigmoid(conv3x3(relu(conv3x3(add(c_feat, s_feat), k1)), k2));
}

/// Fused feature M = k3 * (C + W o S).
inline Grid2D fuse_features(const Grid2D& c_feat, const Grid2D& s_feat, const Grid2D& w,
                            const ConvKernel3x3& k3) {
  if (!c_feat.same_shape(s_feat) || !c_feat.same_shape(w))
    throw std::invalid_argument("fuse_features: shape mismatch");
  return conv3x3(add(c_feat, hadamard(w, s_feat)), k3);
}

/// Direct addition baseline.
inline Grid2D vanilla_fuse(const Grid2D& c_feat, const Grid2D& s_feat) {
  return add(c_feat, s_feat);
}

/// Full attention-weighted path: fuse_features with internally
/// computed weights.
inline Grid2D mff_fuse(const Grid2D& c_feat, const Grid2D& s_feat, const MffKernels& k) {
  return fuse_features(c_feat, s_feat, attn_weights(c_feat, s_feat, k.k1, k.k2), k.k3);
}

struct MffGradients {
  Grid2D d_c;
  Grid2D d_s;
};

/// Reverse-mode input gradients of sum(cotangent o mff_fuse(C, S))
/// with respect to C and S. ReLU subgradient at 0 is taken as 0.
inline MffGradients mff_input_gradients(const Grid2D& c_feat, const Grid2D& s_feat,
                                        const MffKernels& k, const Grid2D& cotangent) {
  const Grid2D pre1 = add(c_feat, s_feat);
  const Grid2D z1 = conv3x3(pre1, k.k1);
  const Grid2D a1 = relu(z1);
  const Grid2D z2 = conv3x3(a1, k.k2);
  const Grid2D w = sigmoid(z2);

  Grid2D d_pre3 = conv3x3_backward_input(cotangent, k.k3);
  MffGradients g{d_pre3, hadamard(d_pre3, w)};

  Grid2D d_w = hadamard(d_pre3, s_feat);
  Grid2D d_z2 = d_w;
  for (std::size_t i = 0; i < d_z2.data.size(); ++i)
    d_z2.data[i] *= w.data[i] * (1.0 - w.data[i]);
  Grid2D d_a1 = conv3x3_backward_input(d_z2, k.k2);
  Grid2D d_z1 = d_a1;
  for (std::size_t i = 0; i < d_z1.data.size(); ++i)
    if (z1.data[i] <= 0.0) d_z1.data[i] = 0.0;
  const Grid2D d_pre1 = conv3x3_backward_input(d_z1, k.k1);
  g.d_c = add(g.d_c, d_pre1);
  g.d_s = add(g.d_s, d_pre1);
  return g;
}

/// Analytic-vs-central-finite-difference check of the MFF input
/// gradients. Elements whose perturbation reaches a ReLU pre-activation
/// within 10*eps of the kink are excluded. Returns the max relative
/// error over the checked elements.
inline double gradient_check(const Grid2D& c_feat, const Grid2D& s_feat, const MffKernels& k,
                             double eps) {
  if (eps < 1e-7 || eps > 1e-4)
    throw std::invalid_argument("gradient_check: eps out of [1e-7, 1e-4]");
  const Grid2D cotangent(c_feat.height, c_feat.width, c_feat.channels, 1.0);
  const MffGradients g = mff_input_gradients(c_feat, s_feat, k, cotangent);
  const Grid2D z1 = conv3x3(add(c_feat, s_feat), k.k1);

  auto objective = [&](const Grid2D& c, const Grid2D& s) {
    const Grid2D m = mff_fuse(c, s, k);
    double sum = 0.0;
    for (double v : m.data) sum += v;
    return sum;
  };

  // an input element feeds z1 in its 3x3 neighborhood; skip it when any
  // of those pre-activations sits near the kink
  auto near_kink = [&](int y, int x) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = std::clamp(y + dy, 0, z1.height - 1);
        const int xx = std::clamp(x + dx, 0, z1.width - 1);
        for (int ch = 0; ch < z1.channels; ++ch)
          if (std::abs(z1.at(yy, xx, ch)) < 10.0 * eps) return true;
      }
    return false;
  };

  double max_err = 0.0;
  auto check_input = [&](bool is_c) {
    Grid2D probe = is_c ? c_feat : s_feat;
    const Grid2D& analytic = is_c ? g.d_c : g.d_s;
    for (int y = 0; y < probe.height; ++y)
      for (int x = 0; x < probe.width; ++x) {
        if (near_kink(y, x)) continue;
        for (int ch = 0; ch < probe.channels; ++ch) {
          const std::size_t i = probe.index(y, x, ch);
          const double saved = probe.data[i];
          probe.data[i] = saved + eps;
          const double jp = is_c ? objective(probe, s_feat) : objective(c_feat, probe);
          probe.data[i] = saved - eps;
          const double jm = is_c ? objective(probe, s_feat) : objective(c_feat, probe);
          probe.data[i] = saved;
          const double numeric = (jp - jm) / (2.0 * eps);
          const double a = analytic.data[i];
          const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
          max_err = std::max(max_err, std::abs(a - numeric) / denom);
        }
      }
  };
  check_input(true);
  check_input(false);
  return max_err;
}

}  // namespace m2d
