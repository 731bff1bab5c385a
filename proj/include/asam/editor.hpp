#pragma once

// Editing engine: L_total = L_rel + L_loc + beta * L_align, optimized with
// Adam over the edit layer only.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "asam/backprop.hpp"
#include "asam/dataset.hpp"
#include "asam/errors.hpp"
#include "asam/lar.hpp"
#include "asam/model.hpp"
#include "asam/rcsl.hpp"

namespace asam {

/// Alignment objective used for the beta-weighted term.
enum class AlignmentKind { none, cosine, l2norm, rcsl };

std::string to_string(AlignmentKind kind);
AlignmentKind alignment_kind_from_string(const std::string& name);

struct EditConfig {
  double eps = 1e-3;
  int n_variants = 4;
  double tau_align = 4.0;
  double beta = 10.0;
  double lr = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_steps = 200;
  /// Stop once the edit-sample cross-entropy drops below this.
  double rel_threshold = 1e-3;
  int loc_batch_size = 16;
  lar::NormKind norm = lar::NormKind::l2;
  double step_scale = 1.0;
  AlignmentKind align_kind = AlignmentKind::rcsl;
  rcsl::AnchorGradient anchor = rcsl::AnchorGradient::detached;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const EditConfig& config);
/// Fields absent from `doc` keep the values already in `into`.
void merge_from_json(const nlohmann::json& doc, EditConfig& into);

struct StepRecord {
  int step = 0;
  double rel_loss = 0;
  double loc_loss = 0;
  double align_loss = 0;
  double total_loss = 0;
  Vector sigma;
  double update_norm = 0;
};

struct MetricsSnapshot {
  double rel = 0;
  double gen = 0;
  double loc = 0;
};

struct EditTrace {
  int unit_id = 0;
  int new_label = 0;
  std::vector<StepRecord> steps;
  /// Number of parameter updates applied.
  int steps_taken = 0;
  MetricsSnapshot final_metrics;
};

/// Non-finite loss during an edit; carries the trace up to the failure.
class EditFailure : public NumericalError {
 public:
  EditFailure(const std::string& what, EditTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const EditTrace& trace() const noexcept { return trace_; }

 private:
  EditTrace trace_;
};

/// Loss with its gradient on the logits and on the edit layer.
struct LossGradient {
  double loss = 0;
  Vector grad_logits;
  GradientBundle edit;
};

/// Cross-entropy of the edit sample against the new label.
LossGradient reliability_loss(const ToyModel& model, const EditRequest& request);

/// Mean KL(softmax(pre) || softmax(current)) over the batch; gradient flows
/// into the current model's edit layer only. grad_logits is left empty.
LossGradient locality_loss(const ToyModel& current, const ToyModel& pre, std::span<const Variant> batch);

/// Edits `model` in place. `model_pre` is the frozen reference for locality.
/// Variants are regenerated every step; Adam state starts fresh.
EditTrace edit(ToyModel& model, const ToyModel& model_pre, const KnowledgeBase& kb,
               const EditRequest& request, const EditConfig& config);

struct SequentialResult {
  std::vector<EditTrace> traces;
  /// Cumulative metrics after each edit, over all edits so far.
  std::vector<MetricsSnapshot> running;
};

class SequentialEditFailure : public NumericalError {
 public:
  SequentialEditFailure(const std::string& what, SequentialResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const SequentialResult& partial() const noexcept { return partial_; }

 private:
  SequentialResult partial_;
};

/// Applies the requests in order. Edit k uses seed config.seed + k, and its
/// locality pool leaves out units edited earlier in the sequence. Locality
/// is always measured against the model as it was on entry.
SequentialResult sequential_edit(ToyModel& model, const KnowledgeBase& kb,
                                 const std::vector<EditRequest>& requests, const EditConfig& config);

nlohmann::json to_json(const StepRecord& record);
/// One JSON object per line, one line per step.
std::string trace_jsonl(const EditTrace& trace);
void write_trace_jsonl(const EditTrace& trace, const std::filesystem::path& path);

}  // namespace asam
