#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <string_view>

#include "protosure/linalg.hpp"
#include "protosure/rng.hpp"

using namespace protosure;

TEST(Rng, SplitmixReferenceSequence) {
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next_u64(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, StreamSeedFollowsDocumentedRule) {
  for (std::uint64_t master : {0ULL, 1ULL, 12345ULL}) {
    for (auto s : {Stream::Parameters, Stream::KMeans, Stream::Shuffle, Stream::Synthetic}) {
      const auto id = static_cast<std::uint64_t>(s);
      EXPECT_EQ(stream_seed(master, s), splitmix64(master ^ (0x9E3779B97F4A7C15ULL * (id + 1))));
    }
  }
  EXPECT_NE(stream_seed(7, Stream::Parameters), stream_seed(7, Stream::KMeans));
}

TEST(Rng, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto b = rng.below(7);
    ASSERT_LT(b, 7u);
    seen.insert(b);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, ShuffleIsAPermutationAndDeterministic) {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[i] = i;
  b = a;
  Rng r1(11), r2(11);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  std::set<int> s(a.begin(), a.end());
  EXPECT_EQ(s.size(), 50u);
}

TEST(Linalg, MatmulVariantsAgreeWithHandProducts) {
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(a, b), Matrix(2, 2, {58, 64, 139, 154}));
  EXPECT_EQ(matmul_at_b(a.transposed(), b), Matrix(2, 2, {58, 64, 139, 154}));
  EXPECT_EQ(matmul_a_bt(a, b.transposed()), Matrix(2, 2, {58, 64, 139, 154}));
}

TEST(Linalg, SoftmaxIsStableAndSumsToOne) {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 0.0);
  const auto q = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
  EXPECT_NEAR(q[0], 0.5, 1e-15);
  EXPECT_NEAR(q[1], 0.25, 1e-15);
}

TEST(Linalg, ArgmaxPrefersLowestIndexOnTies) {
  EXPECT_EQ(argmax(std::vector<double>{0.0, 0.0}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1u);
}

TEST(Linalg, CosineHandlesZeroAndAngles) {
  const std::vector<double> x{1.0, 0.0}, d{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}, z{0.0, 0.0};
  EXPECT_NEAR(cosine(x, d), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_EQ(cosine(x, z), 0.0);
}

TEST(Linalg, RoundToFloatAndFiniteChecks) {
  std::vector<double> v{0.1, 1.0 / 3.0};
  round_to_float(v);
  EXPECT_EQ(v[0], static_cast<double>(0.1f));
  EXPECT_EQ(v[1], static_cast<double>(1.0f / 3.0f));
  EXPECT_TRUE(all_finite(v));
  v.push_back(std::numeric_limits<double>::quiet_NaN());
  EXPECT_FALSE(all_finite(v));
}
