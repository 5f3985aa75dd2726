#include <gtest/gtest.h>

#include <cmath>

#include "protosure/errors.hpp"
#include "protosure/kernels.hpp"
#include "protosure/training.hpp"
#include "support.hpp"

using namespace protosure;
using protosure::testkit::random_input;
using protosure::testkit::random_matrix;

namespace {

std::vector<DocumentInput> random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t c) {
  std::vector<DocumentInput> batch;
  for (std::size_t i = 0; i < n; ++i) batch.push_back(random_input("d" + std::to_string(i), 1 + rng.below(3), 5, d, c, rng));
  return batch;
}

SyntheticTask small_task(std::size_t docs, std::size_t classes, std::uint64_t seed) {
  SyntheticTaskConfig c;
  c.num_documents = docs;
  c.num_classes = classes;
  c.seed = seed;
  return generate_synthetic_task(c);
}

}  // namespace

TEST(CrossEntropy, KnownValues) {
  EXPECT_NEAR(ce_loss(std::vector<double>{0, 0}, 0), std::log(2.0), 1e-15);
  // log(1 + e^-20) to 50 digits
  EXPECT_NEAR(ce_loss(std::vector<double>{10, -10}, 0), 2.0611536203143807032e-9, 1e-22);
  try {
    ce_loss(std::vector<double>{0, 0}, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LabelOutOfRange);
  }
}

TEST(ProtoLoss, CollinearIsMinusOneOrthogonalIsZero) {
  const Matrix h(2, 2, {2, 0, 0, 3});
  EXPECT_NEAR(proto_loss(h, Matrix(2, 2, {1, 0, 0, 5})), -1.0, 1e-15);
  EXPECT_EQ(proto_loss(Matrix(1, 3, {1, 0, 0}), Matrix(2, 3, {0, 1, 0, 0, 0, 1})), 0.0);
}

TEST(ProtoLoss, MatchesBruteForce) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Matrix h = random_matrix(5, 4, rng), p = random_matrix(3, 4, rng);
    EXPECT_NEAR(proto_loss(h, p), testkit::brute_proto_loss(h, p), 1e-12);
  }
}

TEST(DiversityLoss, KnownValuesAndBruteForce) {
  EXPECT_EQ(diversity_loss(Matrix(3, 3, {1, 0, 0, 0, 2, 0, 0, 0, 3})), 0.0);
  EXPECT_NEAR(diversity_loss(Matrix(2, 2, {0.6, 0.8, 0.6, 0.8})), 1.0, 1e-15);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Matrix p = random_matrix(3, 5, rng);
    EXPECT_NEAR(diversity_loss(p), testkit::brute_diversity_loss(p), 1e-12);
    EXPECT_NEAR(diversity_loss(p, true), testkit::brute_diversity_loss(p, true), 1e-12);
  }
}

TEST(TotalLoss, ZeroLambdasGiveMeanCrossEntropy) {
  Rng rng(3);
  const auto model = testkit::random_model(4, 3, 2, rng);
  const auto batch = random_batch(rng, 5, 4, 2);
  TrainConfig cfg;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  const auto lg = total_loss(batch, model, cfg);
  double ce = 0.0;
  for (const auto& d : batch) ce += ce_loss(model.predict(d).logits, *d.label);
  EXPECT_EQ(lg.loss.total, lg.loss.ce);
  EXPECT_NEAR(lg.loss.ce, ce / 5.0, 1e-14);
}

TEST(TotalLoss, DecompositionIsExact) {
  Rng rng(4);
  TrainConfig cfg;
  cfg.lambda1 = 0.3;
  cfg.lambda2 = 0.7;
  for (int t = 0; t < 20; ++t) {
    const auto model = testkit::random_model(3, 4, 3, rng);
    const auto batch = random_batch(rng, 3, 3, 3);
    const auto l = total_loss(batch, model, cfg).loss;
    EXPECT_NEAR(l.total, l.ce + 0.3 * l.proto + 0.7 * l.diversity, 1e-12);
  }
}

TEST(TotalLoss, DiversityGradientAtOrthogonalPairUsesZeroSubgradient) {
  Rng rng(5);
  auto model = testkit::random_model(2, 2, 2, rng);
  model.prototypes.vectors = Matrix(2, 2, {1, 0, 0, 1});
  model.head.weights = Matrix(2, 2);
  const auto batch = random_batch(rng, 2, 2, 2);
  TrainConfig a, b;
  a.lambda2 = 0.0;
  b.lambda2 = 5.0;
  const auto ga = total_loss(batch, model, a).grads.prototypes;
  const auto gb = total_loss(batch, model, b).grads.prototypes;
  EXPECT_EQ(ga, gb);
}

TEST(TotalLoss, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.below(6), k = 2 + rng.below(3), c = 2 + rng.below(2);
    const auto model = testkit::random_model(d, k, c, rng);
    const auto batch = random_batch(rng, 1 + rng.below(3), d, c);
    TrainConfig cfg;
    cfg.normalize_diversity = t % 2 == 1;
    const auto check = testkit::check_gradients(batch, model, cfg);
    EXPECT_LT(check.max_relative_error, 1e-4) << "instance " << t;
  }
}

TEST(TotalLoss, MissingLabelIsMissingBundle) {
  Rng rng(7);
  const auto model = testkit::random_model(3, 2, 2, rng);
  auto batch = random_batch(rng, 1, 3, 2);
  batch[0].label.reset();
  try {
    total_loss(batch, model, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingBundle);
  }
}

TEST(TotalLoss, SmallStepDoesNotIncreaseBatchLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    auto model = testkit::random_model(4, 3, 2, rng);
    const auto batch = random_batch(rng, 4, 4, 2);
    TrainConfig cfg;
    const auto lg = total_loss(batch, model, cfg);
    const double lr = 1e-4;
    auto step = [&](Matrix& w, const Matrix& g) {
      for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] -= lr * g.values()[i];
    };
    step(model.attention.wq, lg.grads.attention.wq);
    step(model.attention.wk, lg.grads.attention.wk);
    step(model.attention.wv, lg.grads.attention.wv);
    step(model.head.weights, lg.grads.head);
    step(model.prototypes.vectors, lg.grads.prototypes);
    EXPECT_LE(total_loss(batch, model, cfg).loss.total, lg.loss.total) << "seed " << seed;
  }
}

TEST(Config, ValidationNamesTheField) {
  TrainConfig c;
  c.lambda1 = -1.0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("lambda1"), std::string::npos);
  }
  TrainConfig b;
  b.batch_size = 0;
  EXPECT_THROW(b.validate(), Error);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrainConfig c;
  c.learning_rate = 2e-3;
  c.num_prototypes = 40;
  c.update_prototypes = false;
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
  auto j = to_json(c);
  j["lamda1"] = 0.1;
  EXPECT_THROW(train_config_from_json(j), Error);
}

TEST(Train, SeparableTwoClassToyReachesNinetyPercentInOneEpoch) {
  const auto task = small_task(400, 2, 21);
  const auto inputs = testkit::synthetic_inputs(task);
  const std::span<const DocumentInput> all(inputs);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  const auto r = train(all.first(300), all.last(100), 2, cfg);
  ASSERT_TRUE(r.report.epochs.back().heldout_fidelity.has_value());
  EXPECT_GE(*r.report.epochs.back().heldout_fidelity, 0.9);
}

TEST(Train, StepCountAndReportShape) {
  const auto inputs = testkit::synthetic_inputs(small_task(50, 4, 2));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.num_prototypes = 6;
  const auto r = train(inputs, {}, 4, cfg);
  EXPECT_EQ(r.report.steps, 3u * 4u);
  ASSERT_EQ(r.report.epochs.size(), 3u);
  const auto j = r.report.to_json();
  EXPECT_FALSE(j.dump().find("seconds") != std::string::npos);
  EXPECT_TRUE(r.report.to_json(true).dump().find("seconds") != std::string::npos);
  for (const auto& e : r.report.epochs) EXPECT_TRUE(std::isfinite(e.total));
}

TEST(Train, FrozenPrototypesStayBitIdentical) {
  const auto inputs = testkit::synthetic_inputs(small_task(60, 4, 3));
  TrainConfig cfg;
  cfg.update_prototypes = false;
  cfg.num_prototypes = 8;
  cfg.epochs = 2;
  const auto init = initialize_model(inputs, 4, cfg);
  const auto r = train(inputs, {}, 4, cfg);
  EXPECT_EQ(r.model.prototypes.vectors, init.prototypes.vectors);
  EXPECT_FALSE(r.model.prototypes.trainable);
  EXPECT_NE(r.model.head.weights, init.head.weights);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto inputs = testkit::synthetic_inputs(small_task(40, 4, 4));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.num_prototypes = 5;
  cfg.epochs = 2;
  const auto init = initialize_model(inputs, 4, cfg);
  const auto r = train(inputs, {}, 4, cfg);
  EXPECT_EQ(r.model.attention, init.attention);
  EXPECT_EQ(r.model.prototypes.vectors, init.prototypes.vectors);
  EXPECT_EQ(r.model.head, init.head);
}

TEST(Train, DeterministicForFixedSeedAndAnyThreadCount) {
  const auto inputs = testkit::synthetic_inputs(small_task(60, 4, 5));
  TrainConfig cfg;
  cfg.num_prototypes = 6;
  cfg.epochs = 2;
  cfg.seed = 17;
  const auto a = train(inputs, {}, 4, cfg);
  const auto b = train(inputs, {}, 4, cfg);
  EXPECT_EQ(a.model, b.model);
  cfg.threads = 3;
  const auto c = train(inputs, {}, 4, cfg);
  EXPECT_EQ(a.model.attention, c.model.attention);
  EXPECT_EQ(a.model.prototypes.vectors, c.model.prototypes.vectors);
  EXPECT_EQ(a.model.head, c.model.head);
  cfg.threads = 1;
  cfg.seed = 18;
  EXPECT_NE(train(inputs, {}, 4, cfg).model.attention, a.model.attention);
}

TEST(Train, ParametersStayFloatRepresentable) {
  const auto inputs = testkit::synthetic_inputs(small_task(30, 4, 6));
  TrainConfig cfg;
  cfg.num_prototypes = 4;
  cfg.epochs = 1;
  const auto r = train(inputs, {}, 4, cfg);
  for (const auto* m : {&r.model.attention.wq, &r.model.attention.wk, &r.model.attention.wv,
                        &r.model.prototypes.vectors, &r.model.head.weights}) {
    for (double v : m->values()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(Train, ExplodingStepReportsDivergedLoss) {
  const auto inputs = testkit::synthetic_inputs(small_task(40, 4, 7));
  TrainConfig cfg;
  cfg.num_prototypes = 4;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e300;  // the first step overflows float32 storage
  try {
    train(inputs, {}, 4, cfg);
    FAIL();
  } catch (const DivergedLoss& e) {
    EXPECT_EQ(e.epoch(), 1u);
    EXPECT_EQ(e.batch(), 1u);
  }
}

TEST(Train, ScalarAndVectorKernelsAgree) {
  if (!kernels::available(kernels::Level::Avx2) && !kernels::available(kernels::Level::Neon)) GTEST_SKIP();
  const auto inputs = testkit::synthetic_inputs(small_task(60, 4, 8));
  TrainConfig cfg;
  cfg.num_prototypes = 6;
  cfg.epochs = 2;
  const auto before = kernels::current_level();
  kernels::set_level(kernels::Level::Scalar);
  const auto s = train(inputs, {}, 4, cfg);
  kernels::set_level(kernels::detect());
  const auto v = train(inputs, {}, 4, cfg);
  kernels::set_level(before);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.model.head.weights.size(); ++i) {
    worst = std::max(worst, std::abs(s.model.head.weights.values()[i] - v.model.head.weights.values()[i]));
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_EQ(fidelity(s.model, inputs), fidelity(v.model, inputs));
}
