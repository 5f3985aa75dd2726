#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "protosure/errors.hpp"
#include "protosure/prototype_layer.hpp"
#include "support.hpp"

using namespace protosure;
using protosure::testkit::random_matrix;

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(KMeans, TwoClustersMatchExhaustivePartitionOptimum) {
  const Matrix pts(4, 2, {0, 0, 0, 1, 10, 0, 10, 1});
  // Exhaustive oracle over every 2-partition.
  double best = 1e300;
  std::vector<std::vector<double>> best_centers;
  for (unsigned mask = 1; mask < 15; ++mask) {
    std::vector<double> c[2] = {{0, 0}, {0, 0}};
    int n[2] = {0, 0};
    for (unsigned i = 0; i < 4; ++i) {
      const int g = (mask >> i) & 1;
      c[g][0] += pts(i, 0);
      c[g][1] += pts(i, 1);
      ++n[g];
    }
    for (int g = 0; g < 2; ++g) {
      c[g][0] /= n[g];
      c[g][1] /= n[g];
    }
    double cost = 0.0;
    for (unsigned i = 0; i < 4; ++i) cost += sq_dist(pts.row(i), c[(mask >> i) & 1]);
    if (cost < best) {
      best = cost;
      best_centers = {c[0], c[1]};
    }
  }
  std::sort(best_centers.begin(), best_centers.end());

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = kmeans(pts, 2, seed);
    std::vector<std::vector<double>> got;
    for (std::size_t k = 0; k < 2; ++k) got.emplace_back(r.centers.row(k).begin(), r.centers.row(k).end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, best_centers);
    EXPECT_EQ(got, (std::vector<std::vector<double>>{{0, 0.5}, {10, 0.5}}));
    EXPECT_TRUE(r.converged);
  }
}

TEST(KMeans, KEqualToDistinctPointsGivesZeroInertia) {
  const Matrix pts(5, 2, {1, 2, 3, 4, 5, 6, 1, 2, 7, 7});
  const auto r = kmeans(pts, 4, 3);
  EXPECT_EQ(r.inertia_history.back(), 0.0);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    bool matched = false;
    for (std::size_t k = 0; k < 4; ++k) matched = matched || sq_dist(pts.row(i), r.centers.row(k)) == 0.0;
    EXPECT_TRUE(matched);
  }
}

TEST(KMeans, TooFewDistinctPoints) {
  const Matrix pts(4, 2, {1, 1, 1, 1, 2, 2, 2, 2});
  try {
    kmeans(pts, 3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewPoints);
  }
}

TEST(KMeans, InertiaNeverIncreasesAndRunsAreDeterministic) {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const Matrix pts = random_matrix(40 + rng.below(40), 1 + rng.below(6), rng);
    const std::size_t k = 2 + rng.below(8);
    const auto a = kmeans(pts, k, static_cast<std::uint64_t>(t));
    const auto b = kmeans(pts, k, static_cast<std::uint64_t>(t));
    EXPECT_EQ(a.centers, b.centers);
    EXPECT_LE(a.iterations, kKMeansMaxIterations);
    for (std::size_t i = 1; i < a.inertia_history.size(); ++i) {
      EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1] * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST(KMeansInit, ProducesTrainablePrototypeSet) {
  Rng rng(5);
  const auto set = kmeans_init(random_matrix(30, 4, rng), 5, 1);
  EXPECT_EQ(set.size(), 5u);
  EXPECT_NO_THROW(set.validate());
}

TEST(Associate, ExactMatchHasSimilarityOne) {
  std::vector<CorpusSentence> corpus{{"b", 0, "x.", {1, 0}}, {"a", 1, "y.", {0.6, 0.8}}};
  const Matrix protos(1, 2, {0.6, 0.8});
  const auto r = associate_nearest(protos, corpus);
  EXPECT_EQ(r[0].doc_id, "a");
  EXPECT_EQ(r[0].sentence_index, 1u);
  EXPECT_NEAR(r[0].similarity, 1.0, 1e-15);
  EXPECT_EQ(r[0].text, "y.");
}

TEST(Associate, TiesGoToLowestDocId) {
  std::vector<CorpusSentence> corpus{{"zeta", 0, "", {1, 0}}, {"alpha", 3, "", {0, 1}}, {"alpha", 1, "", {0, 2}}};
  const Matrix protos(1, 2, {1, 1});
  const auto r = associate_nearest(protos, corpus);
  EXPECT_EQ(r[0].doc_id, "alpha");
  EXPECT_EQ(r[0].sentence_index, 1u);
}

TEST(Associate, MatchesBruteForceScan) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    std::vector<CorpusSentence> corpus;
    for (int i = 0; i < 20; ++i) {
      corpus.push_back({"d" + std::to_string(i / 3), static_cast<std::size_t>(i % 3), "", testkit::random_vector(5, rng)});
    }
    const Matrix protos = random_matrix(6, 5, rng);
    const auto r = associate_nearest(protos, corpus);
    for (std::size_t k = 0; k < 6; ++k) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < corpus.size(); ++i) {
        if (testkit::brute_cosine(protos.row(k), corpus[i].embedding) >
            testkit::brute_cosine(protos.row(k), corpus[best].embedding)) {
          best = i;
        }
      }
      EXPECT_EQ(r[k].doc_id, corpus[best].doc_id);
      EXPECT_EQ(r[k].sentence_index, corpus[best].sentence_index);
    }
  }
}

TEST(Activations, KnownAnglesAndZeroVector) {
  const Matrix p(3, 2, {1, 0, 0, 1, 1 / std::sqrt(2.0), 1 / std::sqrt(2.0)});
  const auto a = activations(std::vector<double>{1, 0}, p);
  EXPECT_NEAR(a[0], 1.0, 1e-15);
  EXPECT_EQ(a[1], 0.0);
  EXPECT_NEAR(a[2], std::sqrt(2.0) / 2.0, 1e-15);
  try {
    activations(std::vector<double>{0, 1e-13}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Activations, ScaleInvariant) {
  Rng rng(7);
  const Matrix p = random_matrix(5, 4, rng);
  for (int t = 0; t < 50; ++t) {
    auto h = testkit::random_vector(4, rng);
    const auto a = activations(h, p);
    for (auto& v : h) v *= 3.5;
    const auto b = activations(h, p);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
  }
}

TEST(PredictDocument, AdditivityAndPermutationInvariance) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.below(5), k = 2 + rng.below(6), c = 2 + rng.below(3), d = 1 + rng.below(6);
    const Matrix h = random_matrix(m, d, rng);
    const Matrix p = random_matrix(k, d, rng);
    const LinearHead head{random_matrix(c, k, rng)};
    const auto b = predict_document(h, p, head);
    for (std::size_t cls = 0; cls < c; ++cls) {
      double from_sentences = 0.0, from_terms = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        from_sentences += b.sentence_logits(i, cls);
        for (std::size_t j = 0; j < k; ++j) from_terms += b.contribution(i, j, cls);
      }
      EXPECT_NEAR(from_sentences, b.logits[cls], 1e-9);
      EXPECT_NEAR(from_terms, b.logits[cls], 1e-9);
    }
    Matrix reversed(m, d);
    for (std::size_t i = 0; i < m; ++i) std::copy(h.row(i).begin(), h.row(i).end(), reversed.row(m - 1 - i).begin());
    const auto r = predict_document(reversed, p, head);
    for (std::size_t cls = 0; cls < c; ++cls) EXPECT_NEAR(r.logits[cls], b.logits[cls], 1e-12);
  }
}

TEST(PredictDocument, HotelReviewContributions) {
  const auto f = testkit::hotel_review_fixture();
  const auto b = f.model.predict(f.document);
  EXPECT_NEAR(b.contribution(0, 0, 0), 0.92 * 0.95, 5e-5);
  EXPECT_NEAR(b.contribution(0, 0, 0), 0.87, 0.005);
  EXPECT_NEAR(b.logits[0], 2.02, 0.01);
  EXPECT_NEAR(b.logits[1], 0.45, 0.005);
  EXPECT_EQ(b.predicted_class, 0u);
}

TEST(PredictDocument, ZeroHeadPicksClassZero) {
  Rng rng(9);
  const auto b = predict_document(random_matrix(3, 4, rng), random_matrix(5, 4, rng), LinearHead{Matrix(3, 5)});
  for (double v : b.logits) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(b.predicted_class, 0u);
}
