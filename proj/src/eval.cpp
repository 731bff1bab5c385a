#include "asam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "asam/errors.hpp"
#include "asam/json_io.hpp"
#include "asam/random.hpp"

namespace asam::eval {

double reliability(const ToyModel& edited, std::span<const EditRequest> requests) {
  if (requests.empty()) throw ConfigError("reliability: no requests");
  int hits = 0;
  for (const auto& r : requests) {
    hits += edited.predict(r.edit_sample.x_v, r.edit_sample.x_t) == r.new_label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(requests.size());
}

double generality(const ToyModel& edited, std::span<const EditRequest> requests) {
  if (requests.empty()) throw ConfigError("generality: no requests");
  double total = 0;
  for (const auto& r : requests) {
    if (r.heldout.empty()) throw ConfigError("generality: request for unit " + std::to_string(r.unit_id) +
                                             " has no held-out variants");
    int hits = 0;
    for (const auto& x : r.heldout) hits += edited.predict(x.x_v, x.x_t) == r.new_label ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(r.heldout.size());
  }
  return total / static_cast<double>(requests.size());
}

double locality(const ToyModel& edited, const ToyModel& pre, const KnowledgeBase& kb,
                std::span<const int> edited_unit_ids) {
  const std::unordered_set<int> skip(edited_unit_ids.begin(), edited_unit_ids.end());
  int agree = 0;
  int total = 0;
  for (const auto& unit : kb.units) {
    if (skip.count(unit.unit_id)) continue;
    for (const auto& x : unit.variants) {
      agree += edited.predict(x.x_v, x.x_t) == pre.predict(x.x_v, x.x_t) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw ConfigError("locality: out-of-scope pool is empty");
  return static_cast<double>(agree) / static_cast<double>(total);
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : report.per_request) {
    per.push_back({{"unit_id", r.unit_id},
                   {"new_label", r.new_label},
                   {"rel", r.rel},
                   {"gen", r.gen},
                   {"loc", r.loc},
                   {"steps_taken", r.steps_taken}});
  }
  return {{"rel", report.rel},
          {"gen", report.gen},
          {"loc", report.loc},
          {"n_requests", report.n_requests},
          {"per_request", std::move(per)},
          {"config", report.config},
          {"seed", report.seed}};
}

namespace {

void require_batch(const Matrix& h_raw) {
  if (h_raw.rows() < 1) throw ConfigError("alignment batch needs at least one row");
}

}  // namespace

rcsl::AlignmentResult cosine_alignment(const Matrix& h_raw, rcsl::AnchorGradient anchor) {
  require_batch(h_raw);
  const Matrix hat = linalg::row_l2_normalize(h_raw);
  const Eigen::Index n = h_raw.rows() - 1;
  rcsl::AlignmentResult r;
  r.grad_h = Matrix::Zero(h_raw.rows(), h_raw.cols());
  if (n == 0) return r;
  Vector anchor_grad = Vector::Zero(h_raw.cols());
  for (Eigen::Index i = 1; i <= n; ++i) {
    r.loss += (1.0 - hat.row(i).dot(hat.row(0))) / static_cast<double>(n);
    const Vector g = -hat.row(0).transpose() / static_cast<double>(n);
    const Vector h = hat.row(i).transpose();
    r.grad_h.row(i) = ((g - h.dot(g) * h) / h_raw.row(i).norm()).transpose();
    anchor_grad -= h / static_cast<double>(n);
  }
  if (anchor == rcsl::AnchorGradient::included) {
    const Vector h0 = hat.row(0).transpose();
    r.grad_h.row(0) = ((anchor_grad - h0.dot(anchor_grad) * h0) / h_raw.row(0).norm()).transpose();
  }
  return r;
}

rcsl::AlignmentResult l2norm_alignment(const Matrix& h_raw, rcsl::AnchorGradient anchor) {
  require_batch(h_raw);
  const Eigen::Index n = h_raw.rows() - 1;
  rcsl::AlignmentResult r;
  r.grad_h = Matrix::Zero(h_raw.rows(), h_raw.cols());
  if (n == 0) return r;
  for (Eigen::Index i = 1; i <= n; ++i) {
    const auto diff = h_raw.row(i) - h_raw.row(0);
    r.loss += diff.squaredNorm() / static_cast<double>(n);
    r.grad_h.row(i) = 2.0 * diff / static_cast<double>(n);
  }
  if (anchor == rcsl::AnchorGradient::included) {
    r.grad_h.row(0) = -r.grad_h.bottomRows(n).colwise().sum();
  }
  return r;
}

MetricsReport ablation_alignment(AlignmentKind kind, const ToyModel& base, const KnowledgeBase& kb,
                                 std::span<const EditRequest> requests, const EditConfig& config) {
  if (requests.empty()) throw ConfigError("ablation: no requests");
  EditConfig cfg = config;
  cfg.align_kind = kind;
  if (kind == AlignmentKind::none) {
    cfg.align_kind = AlignmentKind::rcsl;
    cfg.beta = 0;
  }

  MetricsReport report;
  report.config = to_json(cfg);
  report.seed = cfg.seed;
  report.n_requests = static_cast<int>(requests.size());
  for (const auto& req : requests) {
    ToyModel model = base;
    const EditTrace trace = edit(model, base, kb, req, cfg);
    RequestMetrics m;
    m.unit_id = req.unit_id;
    m.new_label = req.new_label;
    m.rel = trace.final_metrics.rel;
    m.gen = trace.final_metrics.gen;
    m.loc = trace.final_metrics.loc;
    m.steps_taken = trace.steps_taken;
    report.rel += m.rel;
    report.gen += m.gen;
    report.loc += m.loc;
    report.per_request.push_back(m);
  }
  const double n = static_cast<double>(requests.size());
  report.rel /= n;
  report.gen /= n;
  report.loc /= n;
  return report;
}

std::vector<SweepRow> perturbation_sweep(const ToyModel& model, const Variant& sample,
                                         std::span<const double> eps_list, int k_per_eps, std::uint64_t seed) {
  if (eps_list.empty()) throw ConfigError("perturbation sweep: empty eps list");
  if (k_per_eps < 1) throw ConfigError("perturbation sweep: k_per_eps must be >= 1");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (eps_list[i] < 0 || (i > 0 && eps_list[i] < eps_list[i - 1])) {
      throw ConfigError("perturbation sweep: eps list must be nonnegative and ascending");
    }
  }
  const Vector z = model.encode(sample.x_v, sample.x_t).z;
  Rng rng(seed);
  std::vector<SweepRow> rows;
  for (double eps : eps_list) {
    for (int k = 0; k < k_per_eps; ++k) {
      const Vector dir = random_unit_vector(rng, z.size());
      rows.push_back({eps, model.hidden_at_edit_layer(z + eps * dir)});
    }
  }
  return rows;
}

void perturbation_sweep_export(const ToyModel& model, const Variant& sample, std::span<const double> eps_list,
                               int k_per_eps, std::uint64_t seed, const std::filesystem::path& path) {
  const auto rows = perturbation_sweep(model, sample, eps_list, k_per_eps, seed);
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows) jrows.push_back({{"eps", r.eps}, {"vector", io::to_json(r.vector)}});
  const Vector anchor = model.hidden_at_edit_layer(model.encode(sample.x_v, sample.x_t).z);
  io::write_json_file(path, {{"anchor", io::to_json(anchor)}, {"rows", std::move(jrows)}});
}

LipschitzReport empirical_lipschitz(const std::function<Vector(const Vector&)>& f, Eigen::Index dim,
                                    double bound, int trials, double eps, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("lipschitz: trials must be >= 1");
  if (!(eps > 0)) throw ConfigError("lipschitz: eps must be > 0");
  Rng rng(seed);
  LipschitzReport r;
  r.bound = bound;
  r.trials = trials;
  for (int t = 0; t < trials; ++t) {
    const Vector x = uniform_vector(rng, dim, -1.0, 1.0);
    const Vector d = eps * random_unit_vector(rng, dim);
    r.max_ratio = std::max(r.max_ratio, (f(x + d) - f(x)).norm() / eps);
  }
  r.within_bound = r.max_ratio <= r.bound;
  return r;
}

LipschitzReport lipschitz_report(const ToyModel& model, int trials, double eps, std::uint64_t seed) {
  return empirical_lipschitz([&](const Vector& z) { return model.forward_from_latent(z); },
                             model.dims.latent(), lipschitz_bound(model), trials, eps, seed);
}

}  // namespace asam::eval
