#pragma once

// Manual reverse-mode differentiation for the fixed ToyModel architecture.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "asam/model.hpp"

namespace asam {

/// Activations of one affine(+tanh) layer during a forward pass.
struct LayerRecord {
  Vector input;
  Vector pre_activation;
  Vector output;
};

/// Forward pass from the joint latent: layers are pre, edit, head.
///
/// Bound to the model instance that produced it and to the edit-layer
/// parameters at that time.
struct ForwardCache {
  Vector z;
  std::vector<LayerRecord> layers;
  const ToyModel* owner = nullptr;
  std::uint64_t edit_checksum = 0;

  const Vector& edit_input() const { return layers[1].input; }
  const Vector& hidden() const { return layers[1].output; }
  const Vector& logits() const { return layers[2].output; }
};

struct GradientBundle {
  Vector grad_z;
  Matrix grad_edit_weights;
  Vector grad_edit_bias;

  static GradientBundle zeros(const ToyModel& model);
  GradientBundle& operator+=(const GradientBundle& other);
};

/// Gradients for every parameter block; used by base training only.
struct ParameterGradients {
  AffineLayer enc_v;
  AffineLayer enc_t;
  AffineLayer pre;
  AffineLayer edit;
  AffineLayer head;

  static ParameterGradients zeros(const ModelDims& dims);
  ParameterGradients& operator+=(const ParameterGradients& other);
};

ForwardCache forward_cached(const ToyModel& model, const Vector& z);

/// d loss / d z given d loss / d logits.
Vector grad_wrt_latent(const ToyModel& model, const Vector& z, const Vector& loss_grad_on_logits);

/// d loss / d h (edit-layer output) given d loss / d logits.
Vector hidden_grad_from_logits(const ToyModel& model, const Vector& loss_grad_on_logits);

/// Edit-layer gradients from d loss / d h. grad_z is left zero.
/// Throws CacheInvalidError when the model changed since the cache was made.
GradientBundle grad_wrt_edit_layer(const ToyModel& model, const ForwardCache& cache,
                                   const Vector& loss_grad_on_hidden);

/// Batched form: row i of `loss_grad_on_hidden` pairs with caches[i]; the
/// per-row gradients are summed.
GradientBundle grad_wrt_edit_layer(const ToyModel& model, std::span<const ForwardCache> caches,
                                   const Matrix& loss_grad_on_hidden);

/// Full backward from the raw inputs, used by train_base.
ParameterGradients grad_all_parameters(const ToyModel& model, const Vector& x_v, const Vector& x_t,
                                       const Vector& loss_grad_on_logits);

using ScalarFunction = std::function<double(const Vector&)>;

/// max_i |central_diff_i - analytic_i| / max(1, |analytic_i|).
/// Throws EvaluationError if f is non-finite at any probe.
double finite_diff_check(const ScalarFunction& f, const Vector& x, const Vector& analytic, double step);

/// Central-difference gradient of f at x.
Vector numerical_gradient(const ScalarFunction& f, const Vector& x, double step);

}  // namespace asam
