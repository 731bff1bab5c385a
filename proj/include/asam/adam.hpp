#pragma once

#include <cmath>

namespace asam {

struct AdamParameters {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates for one parameter block.
template <typename T>
struct AdamState {
  T mom1;
  T mom2;

  explicit AdamState(const T& like) : mom1(T::Zero(like.rows(), like.cols())), mom2(mom1) {}
};

/// One bias-corrected Adam step; t counts from 1.
template <typename T>
void adam_update(const T& grad, AdamState<T>& state, T& x, long t, const AdamParameters& params) {
  state.mom1 = params.beta1 * state.mom1 + (1 - params.beta1) * grad;
  state.mom2 = params.beta2 * state.mom2 + (1 - params.beta2) * grad.cwiseProduct(grad);
  const double corr1 = 1 - std::pow(params.beta1, static_cast<double>(t));
  const double corr2 = 1 - std::pow(params.beta2, static_cast<double>(t));
  x.array() -= params.lr * (state.mom1.array() / corr1) /
               ((state.mom2.array() / corr2).sqrt() + params.epsilon);
}

}  // namespace asam
