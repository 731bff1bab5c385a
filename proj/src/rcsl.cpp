#include "asam/rcsl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asam/errors.hpp"
#include "asam/json_io.hpp"
#include "asam/softmax.hpp"

namespace asam::rcsl {

AlignmentBatch make_batch(const Matrix& h_raw, double tau_align) {
  if (!(tau_align > 0)) throw ConfigError("tau_align must be > 0");
  if (h_raw.rows() < 1) throw ConfigError("alignment batch needs at least one row");
  AlignmentBatch b;
  b.h_raw = h_raw;
  b.h_norm = linalg::row_l2_normalize(h_raw);
  b.svd = linalg::svd(b.h_norm);
  b.gram = linalg::gram(b.h_norm);
  b.tau_align = tau_align;
  return b;
}

AlignmentBatch build_batch(const ToyModel& model, const lar::LatentVariantSet& variants, double tau_align) {
  const int rows = variants.size() + 1;
  if (model.dims.hidden < rows) {
    throw ConfigError("hidden width must be >= n_variants + 1");
  }
  Matrix h(rows, model.dims.hidden);
  h.row(0) = model.hidden_at_edit_layer(variants.anchor).transpose();
  for (int i = 0; i < variants.size(); ++i) {
    h.row(i + 1) = model.hidden_at_edit_layer(variants.variants[static_cast<std::size_t>(i)]).transpose();
  }
  return make_batch(h, tau_align);
}

AlignmentResult alignment_loss(const AlignmentBatch& batch) {
  if (batch.h_raw.cols() < batch.h_raw.rows()) {
    throw ConfigError("hidden width " + std::to_string(batch.h_raw.cols()) + " is smaller than the batch size " +
                      std::to_string(batch.h_raw.rows()));
  }
  AlignmentResult r;
  r.sigma = batch.svd.sigma;
  const Vector logits = r.sigma / batch.tau_align;
  // sigma_1 is the maximum, so log_sum_exp shifts by it.
  r.loss = log_sum_exp(logits) - logits(0);
  r.softmax_p = softmax(logits);
  return r;
}

AlignmentResult alignment_backward(const AlignmentBatch& batch, SpectrumMode mode, AnchorGradient anchor) {
  AlignmentResult r = alignment_loss(batch);
  const Vector& sigma = r.sigma;
  if (mode == SpectrumMode::strict) {
    for (Eigen::Index k = 0; k + 1 < sigma.size(); ++k) {
      if (sigma(k) - sigma(k + 1) < kSpectralGapTolerance) {
        throw DegenerateSpectrumError("singular values " + std::to_string(k + 1) + " and " +
                                      std::to_string(k + 2) + " are closer than the gap tolerance");
      }
    }
  }

  Vector dsigma = r.softmax_p / batch.tau_align;
  dsigma(0) -= 1.0 / batch.tau_align;
  const Matrix dnorm = batch.svd.u * dsigma.asDiagonal() * batch.svd.v.transpose();

  r.grad_h.resize(batch.h_raw.rows(), batch.h_raw.cols());
  for (Eigen::Index i = 0; i < batch.h_raw.rows(); ++i) {
    const auto hat = batch.h_norm.row(i);
    const auto g = dnorm.row(i);
    const double len = batch.h_raw.row(i).norm();
    r.grad_h.row(i) = (g - hat.dot(g) * hat) / len;
  }
  if (anchor == AnchorGradient::detached) r.grad_h.row(0).setZero();
  return r;
}

Rank1Report rank1_check(const AlignmentBatch& batch, const Rank1Tolerances& tol) {
  if (!(tol.rows > 0) || !(tol.gram > 0) || !(tol.rank > 0)) throw ConfigError("rank1_check: tol must be > 0");
  Rank1Report r;
  const Matrix& g = batch.gram;
  const Eigen::Index n = g.rows();
  r.min_gram_entry = 1.0;
  double worst_gram = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      worst_gram = std::max(worst_gram, std::abs(g(i, j) - 1.0));
      if (i != j) r.min_gram_entry = std::min(r.min_gram_entry, g(i, j));
    }
  }
  double worst_row = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    worst_row = std::max(worst_row, (batch.h_norm.row(i) - batch.h_norm.row(0)).cwiseAbs().maxCoeff());
  }
  r.rank = linalg::numerical_rank(g, tol.rank);
  r.rows_equal = worst_row <= tol.rows;
  r.gram_all_ones = worst_gram <= tol.gram;
  r.rank_one = r.rank == 1;
  r.is_aligned = r.rank_one && r.min_gram_entry >= 1.0 - tol.rank;
  r.conditions_agree = r.rows_equal == r.gram_all_ones && r.gram_all_ones == r.rank_one;
  return r;
}

nlohmann::json gram_export(const AlignmentBatch& batch) {
  return {{"sigma", io::to_json(batch.svd.sigma)}, {"gram", io::to_json(batch.gram)}};
}

void write_gram_export(const AlignmentBatch& batch, const std::filesystem::path& path) {
  io::write_json_file(path, gram_export(batch));
}

}  // namespace asam::rcsl
