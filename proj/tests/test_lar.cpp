#include <gtest/gtest.h>

#include <cmath>

#include "asam/backprop.hpp"
#include "asam/errors.hpp"
#include "asam/lar.hpp"
#include "asam/softmax.hpp"
#include "fixtures.hpp"

namespace asam {
namespace {

using lar::NormKind;

TEST(Norms, ProjectionLandsInsideBall) {
  Rng rng(1);
  for (auto kind : {NormKind::l2, NormKind::linf}) {
    for (int t = 0; t < 200; ++t) {
      const Vector v = gaussian_vector(rng, 24, 3.0);
      const double eps = std::pow(10.0, -1 - t % 5);
      const Vector p = lar::project_to_ball(v, eps, kind);
      EXPECT_LE(lar::norm(p, kind), eps + 1e-12);
    }
  }
}

TEST(Norms, ProjectionIsIdentityInside) {
  Vector v(3);
  v << 0.1, -0.2, 0.05;
  EXPECT_TRUE(linalg::same_values(lar::project_to_ball(v, 1.0, NormKind::l2), v));
  EXPECT_TRUE(linalg::same_values(lar::project_to_ball(v, 0.5, NormKind::linf), v));
  Vector clamped(3);
  clamped << 0.1, -0.1, 0.05;
  EXPECT_TRUE(linalg::same_values(lar::project_to_ball(v, 0.1, NormKind::linf), clamped));
}

TEST(Norms, NamesRoundTrip) {
  for (auto kind : {NormKind::l2, NormKind::linf}) EXPECT_EQ(lar::norm_kind_from_string(lar::to_string(kind)), kind);
  EXPECT_THROW(lar::norm_kind_from_string("l1"), ConfigError);
}

TEST(LatentGradient, VanishesOnSaturatedTarget) {
  ModelDims d;
  ToyModel m = ToyModel::zeros(d);
  m.head.bias(3) = 60.0;
  const Vector g = lar::latent_gradient(m, Vector::Constant(d.latent(), 0.2), 3);
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LatentGradient, ClosedFormForLinearPath) {
  ModelDims d;
  d.embed = 2;
  d.hidden = 4;
  d.classes = 3;
  ToyModel m = ToyModel::zeros(d);
  m.pre.weight = Matrix::Identity(4, 4);
  m.edit.weight = Matrix::Identity(4, 4);
  Matrix w(3, 4);
  w << 0.3, -0.1, 0.2, 0.0, 0.5, 0.4, -0.6, 0.1, -0.2, 0.2, 0.1, 0.7;
  m.head.weight = w;
  const Vector z = Vector::Zero(4);
  const Vector expected = w.transpose() * cross_entropy_grad(w * z, 1);
  EXPECT_LE((lar::latent_gradient(m, z, 1) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LatentGradient, FiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const ToyModel m = ToyModel::initialized(ModelDims{}, seed);
    const Vector z = uniform_vector(rng, 24, -1, 1);
    const int y = static_cast<int>(seed % 10);
    auto f = [&](const Vector& v) { return cross_entropy(m.forward_from_latent(v), y); };
    EXPECT_LE(finite_diff_check(f, z, lar::latent_gradient(m, z, y), 1e-5), 1e-4);
  }
}

TEST(GenerateVariants, ZeroGradientKeepsInits) {
  const ToyModel m = ToyModel::zeros(ModelDims{});
  const Vector z = Vector::Constant(24, 0.1);
  for (auto kind : {NormKind::l2, NormKind::linf}) {
    const auto set = lar::generate_variants(m, z, 0, {4, 1e-3, kind, 1.0, 5});
    for (int i = 0; i < set.size(); ++i) {
      EXPECT_TRUE(linalg::same_values(set.deltas[i], set.inits[i]));
      EXPECT_LE(lar::norm(set.inits[i], kind), 0.5e-3 + 1e-15);
    }
  }
}

TEST(GenerateVariants, BudgetAndShape) {
  const auto& fx = testing::small_fixture();
  const Vector z = fx.model.encode(fx.kb.sample(0, 0).x_v, fx.kb.sample(0, 0).x_t).z;
  for (auto kind : {NormKind::l2, NormKind::linf}) {
    const auto set = lar::generate_variants(fx.model, z, 4, {4, 1e-3, kind, 1.0, 9});
    ASSERT_EQ(set.size(), 4);
    EXPECT_TRUE(linalg::same_values(set.anchor, z));
    for (int i = 0; i < 4; ++i) {
      EXPECT_LE(lar::norm(set.deltas[i], kind), 1e-3 + 1e-12);
      EXPECT_TRUE(linalg::same_values(set.variants[i], Vector(z + set.deltas[i])));
      for (int j = 0; j < i; ++j) EXPECT_FALSE(linalg::same_values(set.deltas[i], set.deltas[j]));
    }
  }
}

TEST(GenerateVariants, AdversarialOnTrainedModel) {
  const auto& fx = testing::small_fixture();
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int unit = trial % fx.kb.n_units();
    const Variant& x = fx.kb.sample(unit, trial % 6);
    const Vector z = fx.model.encode(x.x_v, x.x_t).z;
    const int target = (fx.kb.unit(unit).label + 1 + trial % 9) % 10;
    const auto set = lar::generate_variants(fx.model, z, target, {4, 1e-3, NormKind::l2, 1.0,
                                                                  static_cast<std::uint64_t>(trial)});
    double after = 0, before = 0;
    for (int i = 0; i < 4; ++i) {
      after += cross_entropy(fx.model.forward_from_latent(set.variants[i]), target);
      before += cross_entropy(fx.model.forward_from_latent(z + set.inits[i]), target);
    }
    ok += after >= before ? 1 : 0;
  }
  EXPECT_GE(ok, 90);
}

TEST(GenerateVariants, DeterministicPerSeedAndZeroCount) {
  const ToyModel m = ToyModel::initialized(ModelDims{}, 2);
  const Vector z = Vector::Constant(24, -0.3);
  const auto a = lar::generate_variants(m, z, 1, {3, 1e-2, NormKind::l2, 1.0, 11});
  const auto b = lar::generate_variants(m, z, 1, {3, 1e-2, NormKind::l2, 1.0, 11});
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(linalg::same_values(a.variants[i], b.variants[i]));
  EXPECT_EQ(lar::generate_variants(m, z, 1, {0, 1e-2, NormKind::l2, 1.0, 11}).size(), 0);
  EXPECT_THROW(lar::generate_variants(m, z, 1, {3, 0.0, NormKind::l2, 1.0, 11}), ConfigError);
  EXPECT_THROW(lar::generate_variants(m, z, 10, {3, 1e-3, NormKind::l2, 1.0, 11}), ConfigError);
}

TEST(DefaultDiscriminator, ClosedForms) {
  const Vector a = Vector::LinSpaced(10, -1, 2);
  EXPECT_NEAR(lar::default_discriminator(a, a), 1.0, 1e-15);

  Vector hot_a = Vector::Zero(10), hot_b = Vector::Zero(10);
  hot_a(2) = 200;
  hot_b(7) = 200;
  EXPECT_NEAR(lar::default_discriminator(hot_a, hot_b), 0.0, 1e-12);

  EXPECT_NEAR(lar::default_discriminator(Vector::Zero(10), hot_a), 1.0 / std::sqrt(10.0), 1e-12);
}

TEST(BisectBudget, StepDiscriminator) {
  auto step = [](double m) { return m < 0.25 ? 1.0 : 0.0; };
  const auto r = lar::bisect_budget(step, 0.5, 1.0, 1e-6);
  EXPECT_NEAR(r.epsilon_star, 0.25, 1e-6);
  EXPECT_LE(r.probes, 21);
  EXPECT_LE(r.bracket.second - r.bracket.first, 1e-6);
  EXPECT_FALSE(r.cap_hit);
  for (const auto& [lo, hi] : r.bracket_history) {
    EXPECT_GE(step(lo), 0.5);
    EXPECT_LT(step(hi), 0.5);
  }
  EXPECT_EQ(r.discriminator_scores.size(), static_cast<std::size_t>(r.probes));
}

TEST(BisectBudget, AlwaysSimilarHitsCap) {
  const auto r = lar::bisect_budget([](double) { return 1.0; }, 0.9, 0.7, 1e-6);
  EXPECT_EQ(r.epsilon_star, 0.7);
  EXPECT_TRUE(r.cap_hit);
}

TEST(BisectBudget, Errors) {
  EXPECT_THROW(lar::bisect_budget([](double) { return 0.8; }, 0.9, 1.0, 1e-6), ConfigError);
  EXPECT_THROW(lar::bisect_budget([](double m) { return m > 0 ? std::nan("") : 1.0; }, 0.9, 1.0, 1e-6),
               DiscriminatorError);
  EXPECT_THROW(lar::bisect_budget([](double) { return 1.0; }, 0.9, 1.0, 0.0), ConfigError);
}

TEST(SemanticBudgetSearch, ConstantDiscriminatorHitsCap) {
  const auto& fx = testing::small_fixture();
  const auto r = lar::semantic_budget_search(fx.model, fx.kb.sample(1, 0),
                                             [](const Vector&, const Vector&) { return 1.0; }, 0.9, 1.0, 1e-6);
  EXPECT_TRUE(r.cap_hit);
  EXPECT_EQ(r.epsilon_star, 1.0);
}

TEST(SemanticBudgetSearch, DefaultDiscriminatorBracketsAFlip) {
  const auto& fx = testing::small_fixture();
  const auto r = lar::semantic_budget_search(fx.model, fx.kb.sample(2, 0), lar::default_discriminator, 0.9, 50.0,
                                             1e-6);
  ASSERT_FALSE(r.cap_hit);
  EXPECT_GT(r.epsilon_star, 0.0);
  EXPECT_LE(r.bracket.second - r.bracket.first, 1e-6);
  EXPECT_THROW(lar::semantic_budget_search(fx.model, fx.kb.sample(2, 0), lar::default_discriminator, 1.5, 1.0,
                                           1e-6),
               ConfigError);
}

}  // namespace
}  // namespace asam
