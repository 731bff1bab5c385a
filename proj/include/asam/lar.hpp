#pragma once

// Latent adversarial variants: single-step projected gradient ascent on the
// cross-entropy in the joint latent space, plus the bisection search for the
// largest perturbation magnitude that a discriminator still accepts.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asam/dataset.hpp"
#include "asam/model.hpp"
#include "asam/random.hpp"

namespace asam::lar {

enum class NormKind { l2, linf };

std::string to_string(NormKind kind);
NormKind norm_kind_from_string(const std::string& name);

double norm(const Vector& v, NormKind kind);
/// Nearest point of the radius-`eps` ball (l2: radial scaling, linf: clamping).
Vector project_to_ball(const Vector& v, double eps, NormKind kind);
/// Uniform sample from the radius-`radius` ball.
Vector sample_in_ball(Rng& rng, Eigen::Index dim, double radius, NormKind kind);

struct VariantOptions {
  int n = 4;
  double eps = 1e-3;
  NormKind norm = NormKind::l2;
  double step_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Anchor z0 and n adversarial variants z_i = z0 + delta_i.
struct LatentVariantSet {
  Vector anchor;
  std::vector<Vector> variants;
  std::vector<Vector> deltas;
  /// Random starting perturbations, before the ascent step.
  std::vector<Vector> inits;
  double budget = 0;
  NormKind norm = NormKind::l2;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(variants.size()); }
};

/// Gradient of cross_entropy(forward_from_latent(z), y_star) with respect to z.
Vector latent_gradient(const ToyModel& model, const Vector& z, int y_star);

/// For each i: delta0 uniform in the eps/2 ball (sub-seeded per i), one step
/// of length step_scale * eps along the normalized gradient at z + delta0
/// (l2: g/|g|, linf: sign g), then projection onto the eps ball.
LatentVariantSet generate_variants(const ToyModel& model, const Vector& z, int y_star,
                                   const VariantOptions& options);

/// Cosine similarity of softmax(a) and softmax(b).
double default_discriminator(const Vector& logits_a, const Vector& logits_b);

using Discriminator = std::function<double(const Vector&, const Vector&)>;

struct BudgetProbe {
  double magnitude = 0;
  double score = 0;
};

struct BudgetSearchResult {
  double epsilon_star = 0;
  /// Midpoint probes.
  int iterations = 0;
  /// All discriminator probes after the self-similarity check.
  int probes = 0;
  std::pair<double, double> bracket{0, 0};
  std::vector<BudgetProbe> discriminator_scores;
  std::vector<std::pair<double, double>> bracket_history;
  bool cap_hit = false;
};

/// Bisection over a perturbation magnitude. Keeps score(lo) >= tau_sim and
/// score(hi) < tau_sim and returns lo once hi - lo <= tol. If score(search_hi)
/// already passes, returns search_hi with cap_hit set.
BudgetSearchResult bisect_budget(const std::function<double(double)>& score_at, double tau_sim,
                                 double search_hi, double tol);

/// Largest magnitude m along `direction` with D(M(z), M(z + m * dir)) >= tau_sim,
/// where z is the latent of `x`. Without an explicit direction the normalized
/// cross-entropy gradient towards the model's own prediction is used.
BudgetSearchResult semantic_budget_search(const ToyModel& model_pre, const Variant& x,
                                          const Discriminator& discriminator, double tau_sim,
                                          double search_hi, double tol,
                                          const std::optional<Vector>& direction = std::nullopt);

}  // namespace asam::lar
