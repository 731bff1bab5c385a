#include <gtest/gtest.h>

#include <cmath>

#include "asam/backprop.hpp"
#include "asam/errors.hpp"
#include "asam/random.hpp"
#include "asam/rcsl.hpp"
#include "fixtures.hpp"

namespace asam {
namespace {

Matrix gaussian_matrix(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  return Matrix::NullaryExpr(rows, cols, [&] { return g(rng); });
}

double aligned_closed_form(int rows, double tau) {
  const double top = std::exp(std::sqrt(static_cast<double>(rows)) / tau);
  return -std::log(top / (top + (rows - 1)));
}

TEST(AlignmentLoss, IdenticalRows) {
  const Matrix h = Vector::Constant(5, 1.0).replicate(1, 24) * 0.3;
  const auto batch = rcsl::make_batch(h, 4.0);
  const auto r = rcsl::alignment_loss(batch);
  EXPECT_NEAR(r.sigma(0), std::sqrt(5.0), 1e-12);
  for (int j = 1; j < 5; ++j) EXPECT_EQ(r.sigma(j), 0.0);
  EXPECT_NEAR(r.loss, aligned_closed_form(5, 4.0), 1e-9);
  EXPECT_NEAR(r.loss, 1.1900006568690, 1e-12);
}

TEST(AlignmentLoss, OrthonormalRowsGiveLogN) {
  const auto r = rcsl::alignment_loss(rcsl::make_batch(Matrix::Identity(5, 8), 4.0));
  EXPECT_NEAR(r.loss, std::log(5.0), 1e-9);
  EXPECT_NEAR(r.softmax_p(0), 0.2, 1e-12);
}

TEST(AlignmentLoss, SingletonBatchIsZero) {
  const auto r = rcsl::alignment_loss(rcsl::make_batch(Matrix::Ones(1, 24), 4.0));
  EXPECT_EQ(r.sigma.size(), 1);
  EXPECT_NEAR(r.sigma(0), 1.0, 1e-15);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
}

TEST(AlignmentLoss, NonnegativeAndSigmaSumOfSquares) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const int rows = 2 + t % 6;
    const auto batch = rcsl::make_batch(gaussian_matrix(rng, rows, 24), 4.0);
    const auto r = rcsl::alignment_loss(batch);
    EXPECT_GE(r.loss, 0.0);
    EXPECT_NEAR(r.sigma.squaredNorm(), rows, 1e-10);
    EXPECT_NEAR(-std::log(r.softmax_p(0)), r.loss, 1e-12);
    for (Eigen::Index i = 0; i < rows; ++i) EXPECT_NEAR(batch.gram(i, i), 1.0, 1e-12);
    EXPECT_LE(batch.gram.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(AlignmentLoss, WidthSmallerThanBatchIsRejected) {
  const auto batch = rcsl::make_batch(Matrix::Identity(9, 8) + Matrix::Constant(9, 8, 0.1), 4.0);
  EXPECT_THROW(rcsl::alignment_loss(batch), ConfigError);
  EXPECT_THROW(rcsl::make_batch(Matrix::Ones(3, 3), 0.0), ConfigError);
}

TEST(AlignmentBackward, FiniteDifferencesOnVariantRows) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix h = gaussian_matrix(rng, 5, 24);
    const auto grad = rcsl::alignment_backward(rcsl::make_batch(h, 4.0)).grad_h;
    auto f = [&](const Vector& tail) {
      Matrix hm = h;
      hm.bottomRows(4) = Eigen::Map<const Matrix>(tail.data(), 4, 24);
      return rcsl::alignment_loss(rcsl::make_batch(hm, 4.0)).loss;
    };
    const Matrix rest = h.bottomRows(4);
    const Matrix grad_rest = grad.bottomRows(4);
    EXPECT_LE(finite_diff_check(f, Eigen::Map<const Vector>(rest.data(), rest.size()),
                                Eigen::Map<const Vector>(grad_rest.data(), grad_rest.size()), 1e-5),
              1e-4);
  }
}

TEST(AlignmentBackward, AnchorRowIsExactlyZero) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto r = rcsl::alignment_backward(rcsl::make_batch(gaussian_matrix(rng, 2 + t % 7, 12), 4.0),
                                            rcsl::SpectrumMode::allow_degenerate);
    EXPECT_TRUE((r.grad_h.row(0).array() == 0.0).all());
  }
}

TEST(AlignmentBackward, IncludedAnchorHasGradient) {
  Rng rng(6);
  const auto batch = rcsl::make_batch(gaussian_matrix(rng, 5, 24), 4.0);
  const auto detached = rcsl::alignment_backward(batch);
  const auto included = rcsl::alignment_backward(batch, rcsl::SpectrumMode::strict, rcsl::AnchorGradient::included);
  EXPECT_GT(included.grad_h.row(0).norm(), 0.0);
  EXPECT_TRUE(linalg::same_values(detached.grad_h.bottomRows(4), included.grad_h.bottomRows(4)));
}

TEST(AlignmentBackward, PerturbingVariantsLeavesAnchorUntouched) {
  Rng rng(7);
  Matrix h = gaussian_matrix(rng, 5, 24);
  const auto before = rcsl::make_batch(h, 4.0);
  h.bottomRows(4) += 0.1 * gaussian_matrix(rng, 4, 24);
  const auto after = rcsl::make_batch(h, 4.0);
  EXPECT_TRUE(linalg::same_values(before.h_raw.row(0), after.h_raw.row(0)));
  EXPECT_TRUE((rcsl::alignment_backward(after).grad_h.row(0).array() == 0.0).all());
}

TEST(AlignmentBackward, DegenerateSpectrum) {
  const auto batch = rcsl::make_batch(Matrix::Identity(5, 8), 4.0);
  EXPECT_THROW(rcsl::alignment_backward(batch), DegenerateSpectrumError);
  const auto r = rcsl::alignment_backward(batch, rcsl::SpectrumMode::allow_degenerate);
  EXPECT_TRUE(r.grad_h.allFinite());
}

double min_offdiag(const Matrix& g) {
  double m = 2.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (i != j) m = std::min(m, g(i, j));
  return m;
}

// 50 steps of normalized gradient descent; returns the final rows.
Matrix descend(Matrix h, int trial) {
  double loss = rcsl::alignment_loss(rcsl::make_batch(h, 4.0)).loss;
  for (int step = 0; step < 50; ++step) {
    const auto r = rcsl::alignment_backward(rcsl::make_batch(h, 4.0), rcsl::SpectrumMode::allow_degenerate,
                                            rcsl::AnchorGradient::included);
    h = linalg::row_l2_normalize(Matrix(h - 0.1 * r.grad_h));
    const double next = rcsl::alignment_loss(rcsl::make_batch(h, 4.0)).loss;
    EXPECT_LT(next, loss) << "trial " << trial << " step " << step;
    loss = next;
  }
  return h;
}

TEST(AlignmentBackward, DescentDrivesRowsTowardOneLine) {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const Matrix h = linalg::row_l2_normalize(gaussian_matrix(rng, 5, 24));
    const Matrix out = descend(h, t);
    // The loss sees only singular values, so rows may settle on either sign;
    // the energy share of the top direction is the sign-free measure.
    const double before = std::pow(linalg::singular_values(h)(0), 2) / 5.0;
    const double after = std::pow(linalg::singular_values(out)(0), 2) / 5.0;
    EXPECT_GT(after, before);
  }
}

TEST(AlignmentBackward, DescentRaisesMinGramForPositivelyCorrelatedRows) {
  Rng rng(18);
  for (int t = 0; t < 10; ++t) {
    const Matrix h = linalg::row_l2_normalize(Matrix(gaussian_matrix(rng, 5, 24).cwiseAbs()));
    const Matrix out = descend(h, t);
    EXPECT_GT(min_offdiag(linalg::gram(out)), min_offdiag(linalg::gram(h)));
  }
}

TEST(Rank1Check, IdenticalRows) {
  const auto r = rcsl::rank1_check(rcsl::make_batch(Matrix::Constant(4, 6, 2.0), 4.0), 1e-8);
  EXPECT_TRUE(r.is_aligned);
  EXPECT_EQ(r.rank, 1);
  EXPECT_NEAR(r.min_gram_entry, 1.0, 1e-15);
  EXPECT_TRUE(r.conditions_agree);
}

TEST(Rank1Check, OrthonormalRows) {
  const auto r = rcsl::rank1_check(rcsl::make_batch(Matrix::Identity(5, 8), 4.0), 1e-8);
  EXPECT_FALSE(r.is_aligned);
  EXPECT_EQ(r.rank, 5);
  EXPECT_EQ(r.min_gram_entry, 0.0);
  EXPECT_TRUE(r.conditions_agree);
}

TEST(Rank1Check, NearAlignedWithinLooseTolerance) {
  Rng rng(9);
  const Vector anchor = gaussian_vector(rng, 24);
  Matrix h(5, 24);
  for (int i = 0; i < 5; ++i) h.row(i) = (anchor + gaussian_vector(rng, 24, 1e-6)).transpose();
  EXPECT_TRUE(rcsl::rank1_check(rcsl::make_batch(h, 4.0), 1e-4).is_aligned);
}

TEST(Rank1Check, AntiparallelRowsAreRankOneButNotAligned) {
  Matrix h(2, 3);
  h << 1, 2, 3, -1, -2, -3;
  const auto r = rcsl::rank1_check(rcsl::make_batch(h, 4.0), 1e-8);
  EXPECT_EQ(r.rank, 1);
  EXPECT_FALSE(r.is_aligned);
  EXPECT_NEAR(r.min_gram_entry, -1.0, 1e-15);
}

TEST(BuildBatch, RowsFollowAnchorThenVariants) {
  const auto& fx = testing::small_fixture();
  const Vector z = fx.model.encode(fx.kb.sample(0, 0).x_v, fx.kb.sample(0, 0).x_t).z;
  const auto set = lar::generate_variants(fx.model, z, 3, {4, 1e-3, lar::NormKind::l2, 1.0, 0});
  const auto batch = rcsl::build_batch(fx.model, set, 4.0);
  ASSERT_EQ(batch.rows(), 5);
  EXPECT_EQ(batch.h_raw.cols(), 24);
  EXPECT_TRUE(linalg::same_values(batch.h_raw.row(0).transpose(), fx.model.hidden_at_edit_layer(z)));
  EXPECT_TRUE(linalg::same_values(batch.h_raw.row(2).transpose(), fx.model.hidden_at_edit_layer(set.variants[1])));

  const auto anchor_only = lar::generate_variants(fx.model, z, 3, {0, 1e-3, lar::NormKind::l2, 1.0, 0});
  const auto single = rcsl::build_batch(fx.model, anchor_only, 4.0);
  EXPECT_EQ(single.rows(), 1);
  EXPECT_NEAR(rcsl::alignment_loss(single).loss, 0.0, 1e-15);
}

TEST(BuildBatch, CollapsedVariantsGiveAllOnesGram) {
  const auto& fx = testing::small_fixture();
  const Vector z = fx.model.encode(fx.kb.sample(0, 0).x_v, fx.kb.sample(0, 0).x_t).z;
  const auto set = lar::generate_variants(fx.model, z, 3, {4, 1e-15, lar::NormKind::l2, 1.0, 0});
  const auto batch = rcsl::build_batch(fx.model, set, 4.0);
  EXPECT_LE((batch.gram - Matrix::Ones(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GramExport, CarriesSigmaAndGram) {
  const auto batch = rcsl::make_batch(Matrix::Identity(3, 4), 4.0);
  const auto j = rcsl::gram_export(batch);
  ASSERT_EQ(j.at("sigma").size(), 3u);
  ASSERT_EQ(j.at("gram").size(), 3u);
  EXPECT_EQ(j.at("gram")[1][1].get<double>(), 1.0);
}

}  // namespace
}  // namespace asam
