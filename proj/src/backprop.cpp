#include "asam/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asam/errors.hpp"

namespace asam {
namespace {

Vector tanh_backward(const Vector& output, const Vector& upstream) {
  return upstream.array() * (1.0 - output.array().square());
}

void require_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

void require_fresh(const ToyModel& model, const ForwardCache& cache) {
  if (cache.layers.size() != static_cast<std::size_t>(ToyModel::kLatentLayers) ||
      cache.owner != &model || cache.edit_checksum != checksum(model.edit)) {
    throw CacheInvalidError("forward cache does not match the current model parameters");
  }
}

}  // namespace

GradientBundle GradientBundle::zeros(const ToyModel& model) {
  GradientBundle g;
  g.grad_z = Vector::Zero(model.dims.latent());
  g.grad_edit_weights = Matrix::Zero(model.edit.out_dim(), model.edit.in_dim());
  g.grad_edit_bias = Vector::Zero(model.edit.out_dim());
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  grad_z += other.grad_z;
  grad_edit_weights += other.grad_edit_weights;
  grad_edit_bias += other.grad_edit_bias;
  return *this;
}

ParameterGradients ParameterGradients::zeros(const ModelDims& d) {
  return {AffineLayer::zeros(d.embed, d.visual), AffineLayer::zeros(d.embed, d.text),
          AffineLayer::zeros(d.hidden, d.latent()), AffineLayer::zeros(d.hidden, d.hidden),
          AffineLayer::zeros(d.classes, d.hidden)};
}

ParameterGradients& ParameterGradients::operator+=(const ParameterGradients& o) {
  for (auto [dst, src] : {std::pair{&enc_v, &o.enc_v}, std::pair{&enc_t, &o.enc_t},
                          std::pair{&pre, &o.pre}, std::pair{&edit, &o.edit},
                          std::pair{&head, &o.head}}) {
    dst->weight += src->weight;
    dst->bias += src->bias;
  }
  return *this;
}

ForwardCache forward_cached(const ToyModel& model, const Vector& z) {
  model.require_latent(z);
  ForwardCache cache;
  cache.z = z;
  cache.owner = &model;
  cache.edit_checksum = checksum(model.edit);
  cache.layers.resize(ToyModel::kLatentLayers);

  auto& pre = cache.layers[0];
  pre.input = z;
  pre.pre_activation = model.pre.apply(z);
  pre.output = pre.pre_activation.array().tanh();

  auto& edit = cache.layers[1];
  edit.input = pre.output;
  edit.pre_activation = model.edit.apply(edit.input);
  edit.output = edit.pre_activation;

  auto& head = cache.layers[2];
  head.input = edit.output;
  head.pre_activation = model.head.apply(head.input);
  head.output = head.pre_activation;
  return cache;
}

Vector hidden_grad_from_logits(const ToyModel& model, const Vector& loss_grad_on_logits) {
  require_size(loss_grad_on_logits, model.dims.classes, "logit gradient");
  return model.head.weight.transpose() * loss_grad_on_logits;
}

Vector grad_wrt_latent(const ToyModel& model, const Vector& z, const Vector& loss_grad_on_logits) {
  const ForwardCache cache = forward_cached(model, z);
  const Vector dh = hidden_grad_from_logits(model, loss_grad_on_logits);
  const Vector da = model.edit.weight.transpose() * dh;
  const Vector dpre = tanh_backward(cache.layers[0].output, da);
  return model.pre.weight.transpose() * dpre;
}

GradientBundle grad_wrt_edit_layer(const ToyModel& model, const ForwardCache& cache,
                                   const Vector& loss_grad_on_hidden) {
  require_fresh(model, cache);
  require_size(loss_grad_on_hidden, model.dims.hidden, "hidden gradient");
  GradientBundle g = GradientBundle::zeros(model);
  g.grad_edit_weights.noalias() = loss_grad_on_hidden * cache.edit_input().transpose();
  g.grad_edit_bias = loss_grad_on_hidden;
  return g;
}

GradientBundle grad_wrt_edit_layer(const ToyModel& model, std::span<const ForwardCache> caches,
                                   const Matrix& loss_grad_on_hidden) {
  if (static_cast<Eigen::Index>(caches.size()) != loss_grad_on_hidden.rows()) {
    throw ShapeError("grad_wrt_edit_layer: one cache per gradient row required");
  }
  GradientBundle total = GradientBundle::zeros(model);
  for (std::size_t i = 0; i < caches.size(); ++i) {
    total += grad_wrt_edit_layer(model, caches[i],
                                 Vector(loss_grad_on_hidden.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  return total;
}

ParameterGradients grad_all_parameters(const ToyModel& model, const Vector& x_v, const Vector& x_t,
                                       const Vector& loss_grad_on_logits) {
  const LatentInput latent = model.encode(x_v, x_t);
  const ForwardCache cache = forward_cached(model, latent.z);
  ParameterGradients g;

  const Vector& dlogits = loss_grad_on_logits;
  require_size(dlogits, model.dims.classes, "logit gradient");
  g.head.weight = dlogits * cache.hidden().transpose();
  g.head.bias = dlogits;

  const Vector dh = model.head.weight.transpose() * dlogits;
  g.edit.weight = dh * cache.edit_input().transpose();
  g.edit.bias = dh;

  const Vector da = model.edit.weight.transpose() * dh;
  const Vector dpre = tanh_backward(cache.layers[0].output, da);
  g.pre.weight = dpre * latent.z.transpose();
  g.pre.bias = dpre;

  const Vector dz = model.pre.weight.transpose() * dpre;
  const Eigen::Index e = model.dims.embed;
  const Vector dv = tanh_backward(latent.e_v, dz.head(e));
  const Vector dt = tanh_backward(latent.e_t, dz.tail(e));
  g.enc_v.weight = dv * x_v.transpose();
  g.enc_v.bias = dv;
  g.enc_t.weight = dt * x_t.transpose();
  g.enc_t.bias = dt;
  return g;
}

Vector numerical_gradient(const ScalarFunction& f, const Vector& x, double step) {
  if (!(step > 0)) throw ConfigError("finite difference step must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double plus = f(probe);
    probe(i) = x(i) - step;
    const double minus = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw EvaluationError("non-finite function value at coordinate " + std::to_string(i));
    }
    grad(i) = (plus - minus) / (2 * step);
  }
  return grad;
}

double finite_diff_check(const ScalarFunction& f, const Vector& x, const Vector& analytic, double step) {
  if (analytic.size() != x.size()) throw ShapeError("finite_diff_check: gradient length mismatch");
  const Vector numeric = numerical_gradient(f, x, step);
  double worst = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double err = std::abs(numeric(i) - analytic(i)) / std::max(1.0, std::abs(analytic(i)));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace asam
