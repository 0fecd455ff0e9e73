#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "m2d/mff.hpp"

using namespace m2d;

namespace {

Grid2D random_grid(int h, int w, int c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Grid2D g(h, w, c);
  for (double& v : g.data) v = u(rng);
  return g;
}

}  // namespace

TEST_CASE("attention weights are one half under a zero final kernel", "[mff]") {
  const int C = 3;
  const Grid2D cf = random_grid(4, 5, C, 1);
  const Grid2D sf = random_grid(4, 5, C, 2);
  MffKernels k = make_seeded_kernels(C);
  k.k2 = ConvKernel3x3(C, C);  // zero weights, zero bias
  const Grid2D w = attn_weights(cf, sf, k.k1, k.k2);
  for (double v : w.data) CHECK(v == 0.5);
}

TEST_CASE("attention weights are one half when the inputs cancel", "[mff]") {
  const int C = 2;
  const Grid2D cf = random_grid(3, 3, C, 3);
  Grid2D sf = cf;
  for (double& v : sf.data) v = -v;
  const MffKernels k = make_seeded_kernels(C);
  const Grid2D w = attn_weights(cf, sf, k.k1, k.k2);
  for (double v : w.data) CHECK(v == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("attention weights stay strictly inside (0,1)", "[mff]") {
  const int C = 4;
  const Grid2D cf = random_grid(6, 6, C, 4, 10.0);
  const Grid2D sf = random_grid(6, 6, C, 5, 10.0);
  const MffKernels k = make_seeded_kernels(C);
  const Grid2D w = attn_weights(cf, sf, k.k1, k.k2);
  for (double v : w.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("attention composition matches the primitive chain", "[mff]") {
  const int C = 3;
  const Grid2D cf = random_grid(5, 4, C, 6);
  const Grid2D sf = random_grid(5, 4, C, 7);
  const MffKernels k = make_seeded_kernels(C, 99);
  const Grid2D w = attn_weights(cf, sf, k.k1, k.k2);
  const Grid2D expect = sigmoid(conv3x3(relu(conv3x3(add(cf, sf), k.k1)), k.k2));
  CHECK(w.data == expect.data);
}

TEST_CASE("fusion reduces to conv(C) when the prior branch vanishes", "[mff]") {
  const int C = 3;
  const Grid2D cf = random_grid(4, 4, C, 8);
  const MffKernels k = make_seeded_kernels(C);
  const Grid2D zero(4, 4, C, 0.0);

  // W = 0 kills the prior feature
  const Grid2D m1 = fuse_features(cf, random_grid(4, 4, C, 9), zero, k.k3);
  const Grid2D expect = conv3x3(cf, k.k3);
  for (std::size_t i = 0; i < m1.data.size(); ++i)
    CHECK(m1.data[i] == Catch::Approx(expect.data[i]).margin(1e-12));

  // S = 0 does too, for any W
  const Grid2D w = attn_weights(cf, zero, k.k1, k.k2);
  const Grid2D m2 = fuse_features(cf, zero, w, k.k3);
  for (std::size_t i = 0; i < m2.data.size(); ++i)
    CHECK(m2.data[i] == Catch::Approx(expect.data[i]).margin(1e-12));
}

TEST_CASE("identity fusion kernel with unit weights adds the features", "[mff]") {
  const int C = 2;
  const Grid2D cf = random_grid(3, 4, C, 10);
  const Grid2D sf = random_grid(3, 4, C, 11);
  const Grid2D ones(3, 4, C, 1.0);
  const Grid2D m = fuse_features(cf, sf, ones, ConvKernel3x3::identity(C));
  for (std::size_t i = 0; i < m.data.size(); ++i)
    CHECK(m.data[i] == Catch::Approx(cf.data[i] + sf.data[i]).margin(1e-12));
}

TEST_CASE("fuse_features is linear in the internal feature", "[mff]") {
  const int C = 2;
  const Grid2D a = random_grid(4, 4, C, 12);
  const Grid2D b = random_grid(4, 4, C, 13);
  const Grid2D sf = random_grid(4, 4, C, 14);
  const MffKernels k = make_seeded_kernels(C);
  Grid2D w = attn_weights(a, sf, k.k1, k.k2);  // fixed weights
  ConvKernel3x3 k3 = k.k3;
  std::fill(k3.bias.begin(), k3.bias.end(), 0.0);
  Grid2D mix(4, 4, C);
  const double alpha = 0.7, beta = -1.3;
  for (std::size_t i = 0; i < mix.data.size(); ++i)
    mix.data[i] = alpha * a.data[i] + beta * b.data[i];
  // f(C) = conv(C + W o S) is affine in C; subtract the S part
  const Grid2D base = fuse_features(Grid2D(4, 4, C, 0.0), sf, w, k3);
  auto linear_part = [&](const Grid2D& c_in) {
    Grid2D out = fuse_features(c_in, sf, w, k3);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= base.data[i];
    return out;
  };
  const Grid2D lm = linear_part(mix), la = linear_part(a), lb = linear_part(b);
  for (std::size_t i = 0; i < lm.data.size(); ++i)
    CHECK(lm.data[i] == Catch::Approx(alpha * la.data[i] + beta * lb.data[i]).margin(1e-9));
}

TEST_CASE("vanilla fusion is elementwise addition", "[mff]") {
  const Grid2D cf = random_grid(3, 3, 2, 15);
  const Grid2D zero(3, 3, 2, 0.0);
  CHECK(vanilla_fuse(cf, zero).data == cf.data);
  const Grid2D doubled = vanilla_fuse(cf, cf);
  for (std::size_t i = 0; i < cf.data.size(); ++i)
    CHECK(doubled.data[i] == Catch::Approx(2.0 * cf.data[i]));
  const Grid2D sf = random_grid(3, 3, 2, 16);
  const Grid2D sum = vanilla_fuse(cf, sf);
  for (std::size_t i = 0; i < cf.data.size(); ++i)
    CHECK(sum.data[i] == cf.data[i] + sf.data[i]);
}

TEST_CASE("gradient check in the linear region", "[mff]") {
  const int C = 2;
  // keep relu pre-activations away from zero: positive features, positive k1 bias
  Grid2D cf = random_grid(4, 4, C, 17);
  Grid2D sf = random_grid(4, 4, C, 18);
  for (double& v : cf.data) v = 0.5 + 0.25 * std::abs(v);
  for (double& v : sf.data) v = 0.5 + 0.25 * std::abs(v);
  MffKernels k = make_seeded_kernels(C, 7);
  std::fill(k.k1.bias.begin(), k.k1.bias.end(), 2.0);
  CHECK(gradient_check(cf, sf, k, 1e-5) < 1e-5);
}

TEST_CASE("zero attention kernels yield exactly zero gradient through the weight branch",
          "[mff]") {
  const int C = 2;
  const Grid2D cf = random_grid(3, 3, C, 19);
  const Grid2D sf = random_grid(3, 3, C, 20);
  MffKernels k = make_seeded_kernels(C);
  k.k2 = ConvKernel3x3(C, C);  // constant W = 0.5
  const Grid2D cot(3, 3, C, 1.0);
  const MffGradients g = mff_input_gradients(cf, sf, k, cot);
  // with W constant, dS = conv_backward(cot) * W exactly
  const Grid2D expected_base = conv3x3_backward_input(cot, k.k3);
  for (std::size_t i = 0; i < g.d_s.data.size(); ++i)
    CHECK(g.d_s.data[i] == Catch::Approx(0.5 * expected_base.data[i]).margin(1e-12));
}

TEST_CASE("gradient check on a random smoke configuration", "[mff]") {
  const int C = 3;
  const Grid2D cf = random_grid(5, 5, C, 21);
  const Grid2D sf = random_grid(5, 5, C, 22);
  const MffKernels k = make_seeded_kernels(C, 23);
  CHECK(gradient_check(cf, sf, k, 1e-5) < 1e-4);
}

TEST_CASE("gradient check rejects out-of-range epsilon", "[mff]") {
  const Grid2D g(2, 2, 1, 0.5);
  const MffKernels k = make_seeded_kernels(1);
  CHECK_THROWS_AS(gradient_check(g, g, k, 1e-2), std::invalid_argument);
}

TEST_CASE("default feature providers are deterministic with declared shapes", "[mff]") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid2D img(32, 48, 3);
  for (double& v : img.data) v = u(rng);
  const PhotometricSobelProvider a(16, 4, 2.0);
  const LocalVarianceProvider b(16, 4, 2.0);
  for (const FeatureProvider* p : {static_cast<const FeatureProvider*>(&a),
                                   static_cast<const FeatureProvider*>(&b)}) {
    const Grid2D f1 = p->compute(img);
    const Grid2D f2 = p->compute(img);
    CHECK(f1.data == f2.data);
    CHECK(f1.height == 8);
    CHECK(f1.width == 12);
    CHECK(f1.channels == p->channels());
    CHECK(p->scale() == 0.25);
  }
}
