#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "protosure/kernels.hpp"
#include "protosure/rng.hpp"

namespace k = protosure::kernels;

namespace {

std::vector<const k::KernelTable*> vector_tables() {
  std::vector<const k::KernelTable*> out;
  if (k::avx2_table() && k::available(k::Level::Avx2)) out.push_back(k::avx2_table());
  if (k::neon_table() && k::available(k::Level::Neon)) out.push_back(k::neon_table());
  return out;
}

std::vector<double> draw(std::size_t n, protosure::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

}  // namespace

TEST(Kernels, ScalarTableIsComplete) {
  const auto& t = k::scalar_table();
  EXPECT_EQ(t.level, k::Level::Scalar);
  ASSERT_NE(t.dot, nullptr);
  ASSERT_NE(t.axpy, nullptr);
  ASSERT_NE(t.scale, nullptr);
  ASSERT_NE(t.max, nullptr);
  EXPECT_TRUE(k::available(k::Level::Scalar));
}

TEST(Kernels, ScalarReferenceValues) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  EXPECT_EQ(k::scalar_table().dot(a.data(), b.data(), 3), 32.0);
  std::vector<double> y{1, 1, 1};
  k::scalar_table().axpy(2.0, a.data(), y.data(), 3);
  EXPECT_EQ(y, (std::vector<double>{3, 5, 7}));
  k::scalar_table().scale(0.5, y.data(), 3);
  EXPECT_EQ(y, (std::vector<double>{1.5, 2.5, 3.5}));
  const std::vector<double> m{-1, 7, 3, 7, -9};
  EXPECT_EQ(k::scalar_table().max(m.data(), m.size()), 7.0);
}

TEST(Kernels, VectorVariantsMatchScalarOnRandomLengths) {
  const auto tables = vector_tables();
  if (tables.empty()) GTEST_SKIP() << "no vector kernels on this CPU";
  protosure::Rng rng(99);
  const auto& s = k::scalar_table();
  for (const auto* t : tables) {
    for (std::size_t n = 0; n < 70; ++n) {
      const auto a = draw(n, rng), b = draw(n, rng);
      double magnitude = 0.0;
      for (std::size_t i = 0; i < n; ++i) magnitude += std::abs(a[i] * b[i]);
      EXPECT_NEAR(t->dot(a.data(), b.data(), n), s.dot(a.data(), b.data(), n), 1e-14 * (magnitude + 1.0))
          << t->name << " n=" << n;

      auto y1 = draw(n, rng);
      auto y2 = y1;
      s.axpy(0.37, a.data(), y1.data(), n);
      t->axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15 * (std::abs(y1[i]) + 1.0));

      auto z1 = a, z2 = a;
      s.scale(-1.25, z1.data(), n);
      t->scale(-1.25, z2.data(), n);
      EXPECT_EQ(z1, z2);

      if (n > 0) {
        EXPECT_EQ(t->max(a.data(), n), s.max(a.data(), n));
      }
    }
  }
}

TEST(Kernels, SetLevelSwitchesAndRejectsUnavailable) {
  const auto before = k::current_level();
  k::set_level(k::Level::Scalar);
  EXPECT_EQ(k::current_level(), k::Level::Scalar);
  EXPECT_EQ(k::active().name, k::scalar_table().name);
  for (auto level : {k::Level::Avx2, k::Level::Neon}) {
    if (!k::available(level)) {
      EXPECT_THROW(k::set_level(level), std::invalid_argument);
    }
  }
  k::set_level(before);
  EXPECT_EQ(k::current_level(), before);
}

TEST(Kernels, DetectReturnsAnAvailableLevel) { EXPECT_TRUE(k::available(k::detect())); }
