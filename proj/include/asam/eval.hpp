#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"

#include "asam/dataset.hpp"
#include "asam/editor.hpp"
#include "asam/model.hpp"
#include "asam/rcsl.hpp"

namespace asam::eval {

/// Fraction of edit samples predicted as their new label.
double reliability(const ToyModel& edited, std::span<const EditRequest> requests);

/// Mean over requests of the fraction of held-out variants predicted as the
/// new label.
double generality(const ToyModel& edited, std::span<const EditRequest> requests);

/// Fraction of variants of units outside `edited_unit_ids` on which edited
/// and pre agree (argmax).
double locality(const ToyModel& edited, const ToyModel& pre, const KnowledgeBase& kb,
                std::span<const int> edited_unit_ids);

struct RequestMetrics {
  int unit_id = 0;
  int new_label = 0;
  double rel = 0;
  double gen = 0;
  double loc = 0;
  int steps_taken = 0;
};

struct MetricsReport {
  double rel = 0;
  double gen = 0;
  double loc = 0;
  int n_requests = 0;
  std::vector<RequestMetrics> per_request;
  nlohmann::json config;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const MetricsReport& report);

/// Mean cosine distance of each variant to the anchor, anchor detached
/// unless `anchor` says otherwise.
rcsl::AlignmentResult cosine_alignment(const Matrix& h_raw,
                                       rcsl::AnchorGradient anchor = rcsl::AnchorGradient::detached);
/// Mean squared l2 distance of each variant to the anchor.
rcsl::AlignmentResult l2norm_alignment(const Matrix& h_raw,
                                       rcsl::AnchorGradient anchor = rcsl::AnchorGradient::detached);

/// Runs every request as an independent single edit of a copy of `base`
/// with the given alignment objective (none means beta = 0) and reports the
/// mean metrics. The same config seed is used for every kind.
MetricsReport ablation_alignment(AlignmentKind kind, const ToyModel& base, const KnowledgeBase& kb,
                                 std::span<const EditRequest> requests, const EditConfig& config);

struct SweepRow {
  double eps = 0;
  Vector vector;
};

/// For every eps, k latents at exactly l2 distance eps from the sample's
/// latent (uniform directions); rows hold their edit-layer hidden states.
std::vector<SweepRow> perturbation_sweep(const ToyModel& model, const Variant& sample,
                                         std::span<const double> eps_list, int k_per_eps, std::uint64_t seed);

/// {"anchor": [...], "rows": [{"eps": e, "vector": [...]}, ...]}
void perturbation_sweep_export(const ToyModel& model, const Variant& sample, std::span<const double> eps_list,
                               int k_per_eps, std::uint64_t seed, const std::filesystem::path& path);

struct LipschitzReport {
  double max_ratio = 0;
  double bound = 0;
  int trials = 0;
  bool within_bound = true;
};

/// max over trials of |f(x + d) - f(x)| / eps with |d| = eps and x uniform
/// in [-1, 1]^dim, compared against `bound`.
LipschitzReport empirical_lipschitz(const std::function<Vector(const Vector&)>& f, Eigen::Index dim,
                                    double bound, int trials, double eps, std::uint64_t seed);

/// empirical_lipschitz of forward_from_latent against lipschitz_bound(model).
LipschitzReport lipschitz_report(const ToyModel& model, int trials, double eps, std::uint64_t seed = 0);

}  // namespace asam::eval
