#pragma once

#include <cmath>

#include "asam/linalg.hpp"

namespace asam {

/// Numerically stable log(sum(exp(x))).
inline double log_sum_exp(const Vector& x) {
  const double shift = x.maxCoeff();
  return shift + std::log((x.array() - shift).exp().sum());
}

inline Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

inline Vector log_softmax(const Vector& logits) {
  return logits.array() - log_sum_exp(logits);
}

/// -log softmax(logits)[label]
inline double cross_entropy(const Vector& logits, int label) {
  return log_sum_exp(logits) - logits(label);
}

/// d cross_entropy / d logits = softmax(logits) - one_hot(label)
inline Vector cross_entropy_grad(const Vector& logits, int label) {
  Vector g = softmax(logits);
  g(label) -= 1.0;
  return g;
}

inline int argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace asam
