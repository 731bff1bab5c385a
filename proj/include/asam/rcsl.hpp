#pragma once

// Rank-constrained alignment of edit-layer hidden states.
//
// Row 0 of every batch is the anchor (the unperturbed edit sample); rows
// 1..n are its adversarial variants. The loss is the negative log softmax
// weight of the top singular value of the row-normalized hidden-state matrix.

#include <filesystem>

#include "json.hpp"

#include "asam/lar.hpp"
#include "asam/linalg.hpp"
#include "asam/model.hpp"

namespace asam::rcsl {

inline constexpr double kSpectralGapTolerance = 1e-8;
inline constexpr double kDefaultTau = 4.0;

/// strict: refuse singular values closer than kSpectralGapTolerance.
/// allow_degenerate: apply the rank-one sigma gradient with the computed basis.
enum class SpectrumMode { strict, allow_degenerate };

/// detached zeroes the anchor row of the gradient; included keeps it.
enum class AnchorGradient { detached, included };

struct AlignmentBatch {
  Matrix h_raw;
  Matrix h_norm;
  SvdFactors<double> svd;
  Matrix gram;
  double tau_align = kDefaultTau;

  int rows() const { return static_cast<int>(h_raw.rows()); }
};

struct AlignmentResult {
  double loss = 0;
  Vector sigma;
  Vector softmax_p;
  /// d loss / d h_raw; empty for alignment_loss.
  Matrix grad_h;
};

/// Normalizes, factors and forms the Gram matrix of raw hidden states.
/// Throws DegenerateRowError on a near-zero row.
AlignmentBatch make_batch(const Matrix& h_raw, double tau_align);

/// Rows are hidden_at_edit_layer of the anchor, then of every variant.
AlignmentBatch build_batch(const ToyModel& model, const lar::LatentVariantSet& variants, double tau_align);

/// Requires cols >= rows (ConfigError).
AlignmentResult alignment_loss(const AlignmentBatch& batch);

/// Loss plus d loss / d h_raw:
///   d loss / d sigma_k = (p_k - [k == 1]) / tau
///   d loss / d H_norm  = U diag(d sigma) V^T
///   d loss / d h_i     = (I - h^_i h^_i^T) / |h_i| * d loss / d h^_i
AlignmentResult alignment_backward(const AlignmentBatch& batch, SpectrumMode mode = SpectrumMode::strict,
                                   AnchorGradient anchor = AnchorGradient::detached);

struct Rank1Tolerances {
  double rows;
  double gram;
  double rank;
};

struct Rank1Report {
  bool is_aligned = false;
  int rank = 0;
  double min_gram_entry = 1;
  bool rows_equal = false;
  bool gram_all_ones = false;
  bool rank_one = false;
  bool conditions_agree = false;
};

/// Checks the three equivalent alignment conditions: equal normalized rows,
/// all-ones Gram matrix, and numerical rank one of the Gram matrix.
Rank1Report rank1_check(const AlignmentBatch& batch, const Rank1Tolerances& tol);
inline Rank1Report rank1_check(const AlignmentBatch& batch, double tol) {
  return rank1_check(batch, Rank1Tolerances{tol, tol, tol});
}

/// {"sigma": [...], "gram": [[...]]}
nlohmann::json gram_export(const AlignmentBatch& batch);
void write_gram_export(const AlignmentBatch& batch, const std::filesystem::path& path);

}  // namespace asam::rcsl
