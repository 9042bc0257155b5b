#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "pisces/core.hpp"
#include "pisces/rng.hpp"

using namespace pisces;

namespace {

template <typename F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::InvalidParams;
}

}  // namespace

TEST(WeightedMean, SymmetricAverage) {
  std::vector<std::vector<double>> v{{1, 1}, {3, 3}};
  std::vector<double> w{1, 1};
  EXPECT_EQ(weighted_mean(v, w), (std::vector<double>{2, 2}));
}

TEST(WeightedMean, UnequalWeights) {
  std::vector<std::vector<double>> v{{1, 1}, {3, 3}};
  std::vector<double> w{1, 3};
  EXPECT_EQ(weighted_mean(v, w), (std::vector<double>{2.5, 2.5}));
}

TEST(WeightedMean, SingleVector) {
  std::vector<std::vector<double>> v{{5}};
  std::vector<double> w{7};
  EXPECT_EQ(weighted_mean(v, w), (std::vector<double>{5}));
}

TEST(WeightedMean, Errors) {
  std::vector<std::vector<double>> none;
  std::vector<double> nw;
  EXPECT_EQ(error_code([&] { weighted_mean(none, nw); }), Errc::EmptyInput);
  std::vector<std::vector<double>> ragged{{1, 2}, {1}};
  std::vector<double> w2{1, 1};
  EXPECT_EQ(error_code([&] { weighted_mean(ragged, w2); }), Errc::DimensionMismatch);
  std::vector<std::vector<double>> ok{{1}, {2}};
  std::vector<double> bad{1, 0};
  EXPECT_EQ(error_code([&] { weighted_mean(ok, bad); }), Errc::NonPositiveWeight);
  std::vector<double> short_w{1};
  EXPECT_EQ(error_code([&] { weighted_mean(ok, short_w); }), Errc::DimensionMismatch);
}

TEST(WeightedMean, EqualWeightsGiveArithmeticMean) {
  RngStream rng(3, "wm");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<std::vector<double>> v(n, std::vector<double>(4));
    for (auto& x : v) {
      for (double& e : x) e = rng.uniform(-10, 10);
    }
    const std::vector<double> w(n, 2.5);
    const auto got = weighted_mean(v, w);
    for (std::size_t k = 0; k < 4; ++k) {
      double s = 0;
      for (const auto& x : v) s += x[k];
      EXPECT_NEAR(got[k], s / static_cast<double>(n), 1e-12);
    }
  }
}

TEST(WeightedMean, PermutationInvariantUpToRounding) {
  RngStream rng(4, "wm-perm");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<std::vector<double>> v(n, std::vector<double>(3));
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& e : v[i]) e = rng.uniform(-5, 5);
      w[i] = rng.uniform(0.1, 4);
    }
    const auto perm = rng.permutation(n);
    std::vector<std::vector<double>> pv;
    std::vector<double> pw;
    for (std::size_t i : perm) {
      pv.push_back(v[i]);
      pw.push_back(w[i]);
    }
    const auto a = weighted_mean(v, w);
    const auto b = weighted_mean(pv, pw);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    // Same input order, same bits.
    EXPECT_EQ(a, weighted_mean(v, w));
  }
}

TEST(L2NormSq, Examples) {
  EXPECT_EQ(l2_norm_sq(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_EQ(l2_norm_sq(std::vector<double>{3, 4}), 25.0);
  EXPECT_EQ(l2_norm_sq(std::vector<double>{1}), 1.0);
  EXPECT_EQ(error_code([] { l2_norm_sq(std::vector<double>{1, NAN}); }), Errc::NonFiniteInput);
  EXPECT_EQ(error_code([] { l2_norm_sq(std::vector<double>{INFINITY}); }), Errc::NonFiniteInput);
}

TEST(Rng, SplitMixFinalizerKnownAnswer) {
  // First output of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(detail::mix64(0x9E3779B97F4A7C15ULL), 0xE220A8397B1DCDAFULL);
}

// Vectors produced by an independent re-implementation of the documented
// key schedule (Python big-int arithmetic).
TEST(Rng, FrozenVectors) {
  struct Case {
    std::uint64_t seed;
    const char* label;
    std::uint64_t key;
    std::uint64_t draws[3];
  };
  const Case cases[] = {
      {0, "root", 0xe93f87f63ef09dbcULL, {0x1de78a9a0d11b94bULL, 0x95b6a6388ade074eULL, 0x4d01f1fa129c0248ULL}},
      {1, "engine", 0x507a978cc869ec7eULL, {0x6f8353df019b5052ULL, 0x0fe0fac428b429beULL, 0x2520f31ae97ba482ULL}},
      {42, "client:0", 0x6698612b0dc3fccbULL, {0x5e80eda550045cbdULL, 0xe3bbe67626b67070ULL, 0x77187d4f13106404ULL}},
  };
  for (const auto& c : cases) {
    RngStream r(c.seed, c.label);
    EXPECT_EQ(r.key(), c.key) << c.label;
    for (auto d : c.draws) EXPECT_EQ(r.next_u64(), d) << c.label;
  }
  RngStream child = RngStream(7, "scenario").derive("selection");
  EXPECT_EQ(child.key(), 0x67a81e3b8fb3e978ULL);
  EXPECT_EQ(child.next_u64(), 0x256ba2f37098cedfULL);
  EXPECT_EQ(child.next_u64(), 0xb4610c5cec4cdb1fULL);

  RngStream u(1);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.6858461849065213);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.4663237335629855);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.5441169072529274);
}

TEST(Rng, SameSeedAndLabelReplays) {
  RngStream a = rng_derive(RngStream(1), "engine");
  RngStream b = rng_derive(RngStream(1), "engine");
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DistinctLabelsAndSeedsDiffer) {
  EXPECT_NE(RngStream(1, "client:0").next_u64(), RngStream(1, "client:1").next_u64());
  EXPECT_NE(RngStream(1, "x").next_u64(), RngStream(2, "x").next_u64());
  const RngStream root(1);
  EXPECT_NE(root.derive("client:0").next_u64(), root.derive("client:1").next_u64());
}

TEST(Rng, DeriveIgnoresParentPosition) {
  RngStream a(5);
  const auto before = a.derive("child").next_u64();
  for (int i = 0; i < 10; ++i) a.next_u64();
  EXPECT_EQ(a.derive("child").next_u64(), before);
}

TEST(Rng, UniformAndBelowRanges) {
  RngStream r(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++counts[r.below(7)];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, NormalMoments) {
  RngStream r(10);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, GammaMeanMatchesShape) {
  RngStream r(11);
  for (double shape : {0.3, 1.0, 2.5, 7.0}) {
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += r.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(1.0, shape)) << shape;
  }
}

TEST(Rng, DirichletOnSimplex) {
  RngStream r(12);
  const std::vector<double> alpha{0.5, 1.0, 2.0};
  std::vector<double> mean(3, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto p = r.dirichlet(alpha);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t k = 0; k < 3; ++k) mean[k] += p[k] / n;
  }
  // E[p_k] = alpha_k / sum(alpha).
  EXPECT_NEAR(mean[0], 0.5 / 3.5, 0.01);
  EXPECT_NEAR(mean[1], 1.0 / 3.5, 0.01);
  EXPECT_NEAR(mean[2], 2.0 / 3.5, 0.01);
}

TEST(Rng, PermutationIsBijection) {
  RngStream r(13);
  for (std::size_t n : {0u, 1u, 2u, 17u, 100u}) {
    auto p = r.permutation(n);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(p[i], i);
  }
}
