#include "asam/editor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "asam/adam.hpp"
#include "asam/eval.hpp"
#include "asam/json_io.hpp"
#include "asam/random.hpp"
#include "asam/softmax.hpp"

namespace asam {
namespace {

// Sub-seed streams within one edit.
std::uint64_t variant_stream(int step) { return 2 * static_cast<std::uint64_t>(step); }
std::uint64_t locality_stream(int step) { return 2 * static_cast<std::uint64_t>(step) + 1; }

std::vector<std::size_t> draw_without_replacement(Rng& rng, std::size_t pool, std::size_t count) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, pool);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

// d KL(p || softmax(logits)) / d logits = softmax(logits) - p
double kl_divergence(const Vector& p_ref, const Vector& logits) {
  const Vector log_q = log_softmax(logits);
  double kl = 0;
  for (Eigen::Index c = 0; c < p_ref.size(); ++c) {
    if (p_ref(c) > 0) kl += p_ref(c) * (std::log(p_ref(c)) - log_q(c));
  }
  return kl;
}

struct AlignmentStep {
  double loss = 0;
  Vector sigma;
  Matrix grad_h;
};

AlignmentStep alignment_step(const Matrix& h_raw, const EditConfig& config) {
  AlignmentStep out;
  rcsl::AlignmentResult r;
  switch (config.align_kind) {
    case AlignmentKind::none:
      out.grad_h = Matrix::Zero(h_raw.rows(), h_raw.cols());
      return out;
    case AlignmentKind::cosine:
      r = eval::cosine_alignment(h_raw, config.anchor);
      break;
    case AlignmentKind::l2norm:
      r = eval::l2norm_alignment(h_raw, config.anchor);
      break;
    case AlignmentKind::rcsl: {
      const auto batch = rcsl::make_batch(h_raw, config.tau_align);
      r = rcsl::alignment_backward(batch, rcsl::SpectrumMode::allow_degenerate, config.anchor);
      break;
    }
  }
  out.loss = r.loss;
  out.sigma = r.sigma;
  out.grad_h = r.grad_h;
  return out;
}

}  // namespace

std::string to_string(AlignmentKind kind) {
  switch (kind) {
    case AlignmentKind::none: return "none";
    case AlignmentKind::cosine: return "cosine";
    case AlignmentKind::l2norm: return "l2norm";
    case AlignmentKind::rcsl: return "rcsl";
  }
  return "rcsl";
}

AlignmentKind alignment_kind_from_string(const std::string& name) {
  if (name == "none") return AlignmentKind::none;
  if (name == "cosine") return AlignmentKind::cosine;
  if (name == "l2norm") return AlignmentKind::l2norm;
  if (name == "rcsl") return AlignmentKind::rcsl;
  throw ConfigError("unknown alignment kind '" + name + "'");
}

void EditConfig::validate() const {
  if (!(eps > 0)) throw ConfigError("eps must be > 0");
  if (n_variants < 0) throw ConfigError("n_variants must be >= 0");
  if (!(tau_align > 0)) throw ConfigError("tau must be > 0");
  if (!(beta >= 0)) throw ConfigError("beta must be >= 0");
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (loc_batch_size < 1) throw ConfigError("loc_batch_size must be >= 1");
  if (!(step_scale > 0)) throw ConfigError("step_scale must be > 0");
}

nlohmann::json to_json(const EditConfig& c) {
  return {{"eps", c.eps},
          {"n_variants", c.n_variants},
          {"tau", c.tau_align},
          {"beta", c.beta},
          {"lr", c.lr},
          {"adam_betas", {c.adam_beta1, c.adam_beta2}},
          {"adam_eps", c.adam_eps},
          {"max_steps", c.max_steps},
          {"rel_threshold", c.rel_threshold},
          {"loc_batch_size", c.loc_batch_size},
          {"norm", lar::to_string(c.norm)},
          {"step_scale", c.step_scale},
          {"align_kind", to_string(c.align_kind)},
          {"anchor_detached", c.anchor == rcsl::AnchorGradient::detached},
          {"seed", c.seed}};
}

void merge_from_json(const nlohmann::json& doc, EditConfig& c) {
  if (!doc.is_object()) throw ConfigError("edit config must be a JSON object");
  try {
    if (doc.contains("eps")) c.eps = doc["eps"].get<double>();
    if (doc.contains("n_variants")) c.n_variants = doc["n_variants"].get<int>();
    if (doc.contains("tau")) c.tau_align = doc["tau"].get<double>();
    if (doc.contains("beta")) c.beta = doc["beta"].get<double>();
    if (doc.contains("lr")) c.lr = doc["lr"].get<double>();
    if (doc.contains("adam_betas")) {
      c.adam_beta1 = doc["adam_betas"].at(0).get<double>();
      c.adam_beta2 = doc["adam_betas"].at(1).get<double>();
    }
    if (doc.contains("adam_eps")) c.adam_eps = doc["adam_eps"].get<double>();
    if (doc.contains("max_steps")) c.max_steps = doc["max_steps"].get<int>();
    if (doc.contains("rel_threshold")) c.rel_threshold = doc["rel_threshold"].get<double>();
    if (doc.contains("loc_batch_size")) c.loc_batch_size = doc["loc_batch_size"].get<int>();
    if (doc.contains("norm")) c.norm = lar::norm_kind_from_string(doc["norm"].get<std::string>());
    if (doc.contains("step_scale")) c.step_scale = doc["step_scale"].get<double>();
    if (doc.contains("align_kind")) c.align_kind = alignment_kind_from_string(doc["align_kind"].get<std::string>());
    if (doc.contains("anchor_detached")) {
      c.anchor = doc["anchor_detached"].get<bool>() ? rcsl::AnchorGradient::detached
                                                    : rcsl::AnchorGradient::included;
    }
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("edit config: ") + e.what());
  }
}

LossGradient reliability_loss(const ToyModel& model, const EditRequest& request) {
  const Vector z = model.encode(request.edit_sample.x_v, request.edit_sample.x_t).z;
  const ForwardCache cache = forward_cached(model, z);
  LossGradient out;
  out.loss = cross_entropy(cache.logits(), request.new_label);
  out.grad_logits = cross_entropy_grad(cache.logits(), request.new_label);
  out.edit = grad_wrt_edit_layer(model, cache, hidden_grad_from_logits(model, out.grad_logits));
  return out;
}

LossGradient locality_loss(const ToyModel& current, const ToyModel& pre, std::span<const Variant> batch) {
  if (batch.empty()) throw ConfigError("locality batch is empty");
  LossGradient out;
  out.edit = GradientBundle::zeros(current);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Variant& x : batch) {
    const Vector p = softmax(pre.forward(x.x_v, x.x_t));
    const ForwardCache cache = forward_cached(current, current.encode(x.x_v, x.x_t).z);
    out.loss += scale * kl_divergence(p, cache.logits());
    const Vector dlogits = scale * (softmax(cache.logits()) - p);
    out.edit += grad_wrt_edit_layer(current, cache, hidden_grad_from_logits(current, dlogits));
  }
  return out;
}

EditTrace edit(ToyModel& model, const ToyModel& model_pre, const KnowledgeBase& kb,
               const EditRequest& request, const EditConfig& config) {
  config.validate();
  if (request.out_of_scope.empty()) throw ConfigError("edit request has an empty out-of-scope pool");
  if (config.n_variants + 1 > model.dims.hidden) throw ConfigError("hidden width must be >= n_variants + 1");

  EditTrace trace;
  trace.unit_id = request.unit_id;
  trace.new_label = request.new_label;

  const Vector z0 = model.encode(request.edit_sample.x_v, request.edit_sample.x_t).z;

  std::vector<Variant> pool;
  std::vector<Vector> pool_pre_p;
  pool.reserve(request.out_of_scope.size());
  for (const auto& ref : request.out_of_scope) {
    pool.push_back(kb.sample(ref.unit_id, ref.variant));
    pool_pre_p.push_back(softmax(model_pre.forward(pool.back().x_v, pool.back().x_t)));
  }
  std::vector<Vector> pool_z;
  pool_z.reserve(pool.size());
  for (const auto& x : pool) pool_z.push_back(model.encode(x.x_v, x.x_t).z);

  AdamParameters adam{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
  AdamState<Matrix> w_state(model.edit.weight);
  AdamState<Vector> b_state(model.edit.bias);

  for (int step = 0; step <= config.max_steps; ++step) {
    StepRecord rec;
    rec.step = step;

    const ForwardCache anchor = forward_cached(model, z0);
    rec.rel_loss = cross_entropy(anchor.logits(), request.new_label);
    GradientBundle grad = grad_wrt_edit_layer(
        model, anchor, hidden_grad_from_logits(model, cross_entropy_grad(anchor.logits(), request.new_label)));

    // Locality: KL to the frozen reference on a fresh out-of-scope batch.
    Rng loc_rng(sub_seed(config.seed, locality_stream(step)));
    const auto picks = draw_without_replacement(loc_rng, pool.size(), static_cast<std::size_t>(config.loc_batch_size));
    const double scale = 1.0 / static_cast<double>(picks.size());
    for (std::size_t idx : picks) {
      const ForwardCache cache = forward_cached(model, pool_z[idx]);
      rec.loc_loss += scale * kl_divergence(pool_pre_p[idx], cache.logits());
      const Vector dlogits = scale * (softmax(cache.logits()) - pool_pre_p[idx]);
      grad += grad_wrt_edit_layer(model, cache, hidden_grad_from_logits(model, dlogits));
    }

    // Alignment over the anchor and freshly generated adversarial variants.
    if (config.n_variants > 0 && config.align_kind != AlignmentKind::none) {
      lar::VariantOptions vopt{config.n_variants, config.eps, config.norm, config.step_scale,
                               sub_seed(config.seed, variant_stream(step))};
      const auto variants = lar::generate_variants(model, z0, request.new_label, vopt);
      std::vector<ForwardCache> caches;
      caches.reserve(static_cast<std::size_t>(variants.size()) + 1);
      caches.push_back(anchor);
      for (const auto& zi : variants.variants) caches.push_back(forward_cached(model, zi));
      Matrix h(static_cast<Eigen::Index>(caches.size()), model.dims.hidden);
      for (std::size_t i = 0; i < caches.size(); ++i) h.row(static_cast<Eigen::Index>(i)) = caches[i].hidden().transpose();

      const AlignmentStep align = alignment_step(h, config);
      rec.align_loss = align.loss;
      rec.sigma = align.sigma;
      GradientBundle align_grad = grad_wrt_edit_layer(model, caches, align.grad_h);
      align_grad.grad_edit_weights *= config.beta;
      align_grad.grad_edit_bias *= config.beta;
      grad += align_grad;
    }

    rec.total_loss = rec.rel_loss + rec.loc_loss + config.beta * rec.align_loss;
    if (!std::isfinite(rec.total_loss) || !grad.grad_edit_weights.allFinite() || !grad.grad_edit_bias.allFinite()) {
      trace.steps.push_back(rec);
      throw EditFailure("non-finite loss at step " + std::to_string(step), std::move(trace));
    }

    const bool done = rec.rel_loss < config.rel_threshold || step == config.max_steps;
    if (!done) {
      const Matrix w_before = model.edit.weight;
      const Vector b_before = model.edit.bias;
      adam_update(grad.grad_edit_weights, w_state, model.edit.weight, step + 1, adam);
      adam_update(grad.grad_edit_bias, b_state, model.edit.bias, step + 1, adam);
      rec.update_norm = std::sqrt((model.edit.weight - w_before).squaredNorm() +
                                  (model.edit.bias - b_before).squaredNorm());
      ++trace.steps_taken;
    }
    trace.steps.push_back(std::move(rec));
    if (done) break;
  }

  const EditRequest* one = &request;
  trace.final_metrics.rel = eval::reliability(model, std::span(one, 1));
  trace.final_metrics.gen = request.heldout.empty() ? 0.0 : eval::generality(model, std::span(one, 1));
  const int edited[] = {request.unit_id};
  trace.final_metrics.loc = eval::locality(model, model_pre, kb, edited);
  return trace;
}

SequentialResult sequential_edit(ToyModel& model, const KnowledgeBase& kb,
                                 const std::vector<EditRequest>& requests, const EditConfig& config) {
  std::unordered_set<int> seen;
  for (const auto& r : requests) {
    if (!seen.insert(r.unit_id).second) {
      throw InvalidEditError("sequential edits must target distinct units (unit " + std::to_string(r.unit_id) +
                             " repeats)");
    }
  }

  const ToyModel model_pre = model;
  SequentialResult result;
  std::vector<int> edited_units;
  std::unordered_set<int> edited_set;
  for (std::size_t k = 0; k < requests.size(); ++k) {
    EditRequest req = requests[k];
    std::erase_if(req.out_of_scope, [&](const SampleRef& ref) { return edited_set.count(ref.unit_id) > 0; });
    EditConfig cfg = config;
    cfg.seed = config.seed + k;
    try {
      result.traces.push_back(edit(model, model_pre, kb, req, cfg));
    } catch (const EditFailure& e) {
      result.traces.push_back(e.trace());
      throw SequentialEditFailure(std::string("edit ") + std::to_string(k) + ": " + e.what(), std::move(result));
    }
    edited_units.push_back(req.unit_id);
    edited_set.insert(req.unit_id);

    const std::span<const EditRequest> so_far(requests.data(), k + 1);
    MetricsSnapshot m;
    m.rel = eval::reliability(model, so_far);
    m.gen = eval::generality(model, so_far);
    m.loc = eval::locality(model, model_pre, kb, edited_units);
    result.running.push_back(m);
  }
  return result;
}

nlohmann::json to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"rel_loss", r.rel_loss},
          {"loc_loss", r.loc_loss},
          {"align_loss", r.align_loss},
          {"total_loss", r.total_loss},
          {"sigma", io::to_json(r.sigma)},
          {"update_norm", r.update_norm}};
}

std::string trace_jsonl(const EditTrace& trace) {
  std::ostringstream out;
  for (const auto& r : trace.steps) out << to_json(r).dump() << '\n';
  return out.str();
}

void write_trace_jsonl(const EditTrace& trace, const std::filesystem::path& path) {
  io::write_text_file(path, trace_jsonl(trace));
}

}  // namespace asam
