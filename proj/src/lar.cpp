#include "asam/lar.hpp"

#include <cmath>

#include "asam/backprop.hpp"
#include "asam/errors.hpp"
#include "asam/softmax.hpp"

namespace asam::lar {

std::string to_string(NormKind kind) { return kind == NormKind::l2 ? "l2" : "linf"; }

NormKind norm_kind_from_string(const std::string& name) {
  if (name == "l2" || name == "L2") return NormKind::l2;
  if (name == "linf" || name == "Linf") return NormKind::linf;
  throw ConfigError("unknown norm '" + name + "' (expected l2 or linf)");
}

double norm(const Vector& v, NormKind kind) {
  if (v.size() == 0) return 0;
  return kind == NormKind::l2 ? v.norm() : v.cwiseAbs().maxCoeff();
}

Vector project_to_ball(const Vector& v, double eps, NormKind kind) {
  if (kind == NormKind::linf) return v.cwiseMax(-eps).cwiseMin(eps);
  const double n = v.norm();
  if (n <= eps) return v;
  Vector out = v * (eps / n);
  // Radial scaling can overshoot by an ulp.
  while (out.norm() > eps) out *= 1.0 - 1e-16;
  return out;
}

Vector sample_in_ball(Rng& rng, Eigen::Index dim, double radius, NormKind kind) {
  if (kind == NormKind::linf) return uniform_vector(rng, dim, -radius, radius);
  const Vector dir = random_unit_vector(rng, dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return dir * (radius * std::pow(unit(rng), 1.0 / static_cast<double>(dim)));
}

Vector latent_gradient(const ToyModel& model, const Vector& z, int y_star) {
  if (y_star < 0 || y_star >= model.dims.classes) {
    throw ConfigError("target class " + std::to_string(y_star) + " out of range");
  }
  const Vector logits = model.forward_from_latent(z);
  return grad_wrt_latent(model, z, cross_entropy_grad(logits, y_star));
}

LatentVariantSet generate_variants(const ToyModel& model, const Vector& z, int y_star,
                                   const VariantOptions& options) {
  if (options.n < 0) throw ConfigError("variant count must be >= 0");
  if (!(options.eps > 0)) throw ConfigError("perturbation budget must be > 0");
  if (!(options.step_scale > 0)) throw ConfigError("step scale must be > 0");
  model.require_latent(z);

  LatentVariantSet set;
  set.anchor = z;
  set.budget = options.eps;
  set.norm = options.norm;
  set.seed = options.seed;
  const double step = options.step_scale * options.eps;
  for (int i = 0; i < options.n; ++i) {
    Rng rng(sub_seed(options.seed, static_cast<std::uint64_t>(i)));
    const Vector init = sample_in_ball(rng, z.size(), options.eps / 2, options.norm);
    const Vector g = latent_gradient(model, z + init, y_star);
    if (!g.allFinite()) throw NumericalError("non-finite latent gradient");
    Vector ascent = Vector::Zero(z.size());
    if (options.norm == NormKind::l2) {
      const double gn = g.norm();
      if (gn > 0) ascent = g / gn;
    } else {
      ascent = g.array().sign();
    }
    Vector delta = project_to_ball(init + step * ascent, options.eps, options.norm);
    set.inits.push_back(init);
    set.variants.push_back(z + delta);
    set.deltas.push_back(std::move(delta));
  }
  return set;
}

double default_discriminator(const Vector& logits_a, const Vector& logits_b) {
  if (logits_a.size() != logits_b.size()) throw ShapeError("discriminator: logit length mismatch");
  const Vector p = softmax(logits_a);
  const Vector q = softmax(logits_b);
  return p.dot(q) / (p.norm() * q.norm());
}

BudgetSearchResult bisect_budget(const std::function<double(double)>& score_at, double tau_sim,
                                 double search_hi, double tol) {
  if (!(tol > 0)) throw ConfigError("bisection tolerance must be > 0");
  if (!(search_hi > 0)) throw ConfigError("search_hi must be > 0");

  auto probe = [&](double magnitude) {
    const double s = score_at(magnitude);
    if (std::isnan(s)) throw DiscriminatorError("discriminator returned NaN at magnitude " + std::to_string(magnitude));
    return s;
  };
  if (!(probe(0.0) >= tau_sim)) {
    throw ConfigError("tau_sim exceeds the discriminator's self-similarity");
  }

  BudgetSearchResult r;
  const double top = probe(search_hi);
  r.discriminator_scores.push_back({search_hi, top});
  r.probes = 1;
  if (top >= tau_sim) {
    r.epsilon_star = search_hi;
    r.bracket = {search_hi, search_hi};
    r.bracket_history.push_back(r.bracket);
    r.cap_hit = true;
    return r;
  }

  double lo = 0;
  double hi = search_hi;
  r.bracket_history.emplace_back(lo, hi);
  while (hi - lo > tol) {
    const double mid = lo + (hi - lo) / 2;
    const double s = probe(mid);
    r.discriminator_scores.push_back({mid, s});
    ++r.iterations;
    ++r.probes;
    if (s >= tau_sim) {
      lo = mid;
    } else {
      hi = mid;
    }
    r.bracket_history.emplace_back(lo, hi);
  }
  r.epsilon_star = lo;
  r.bracket = {lo, hi};
  return r;
}

BudgetSearchResult semantic_budget_search(const ToyModel& model_pre, const Variant& x,
                                          const Discriminator& discriminator, double tau_sim,
                                          double search_hi, double tol,
                                          const std::optional<Vector>& direction) {
  const Vector z = model_pre.encode(x.x_v, x.x_t).z;
  const Vector base = model_pre.forward_from_latent(z);
  Vector dir;
  if (direction) {
    model_pre.require_latent(*direction);
    dir = *direction;
  } else {
    dir = latent_gradient(model_pre, z, argmax(base));
  }
  const double dn = dir.norm();
  if (!(dn > 0) || !std::isfinite(dn)) {
    throw ConfigError("budget search direction is zero; pass an explicit direction");
  }
  dir /= dn;
  return bisect_budget(
      [&](double magnitude) { return discriminator(base, model_pre.forward_from_latent(z + magnitude * dir)); },
      tau_sim, search_hi, tol);
}

}  // namespace asam::lar
