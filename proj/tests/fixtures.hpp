#pragma once

#include <cstdint>

#include "asam/backprop.hpp"
#include "asam/dataset.hpp"
#include "asam/model.hpp"

namespace asam::testing {

struct TrainedFixture {
  KnowledgeBase kb;
  ToyModel model;
  double accuracy = 0;
};

inline TrainedFixture trained_fixture(int n_units, int m_variants, std::uint64_t seed) {
  DatasetConfig dc;
  dc.n_units = n_units;
  dc.m_variants = m_variants;
  dc.noise_scale = 0.08;
  dc.seed = seed;
  TrainedFixture f;
  f.kb = generate_knowledge_base(dc);
  ModelDims dims;
  dims.visual = dc.visual;
  dims.text = dc.text;
  dims.classes = dc.classes;
  f.model = ToyModel::initialized(dims, seed);
  TrainOptions opt;
  opt.seed = seed;
  f.accuracy = train_base(f.model, f.kb, opt).accuracy;
  return f;
}

/// 20 units with 8 variants each: the kb used by the paired editing comparisons.
inline const TrainedFixture& paired_fixture() {
  static const TrainedFixture f = trained_fixture(20, 8, 0);
  return f;
}

/// 10 units with 6 variants each.
inline const TrainedFixture& small_fixture() {
  static const TrainedFixture f = trained_fixture(10, 6, 0);
  return f;
}

/// Edit-layer parameters as one vector: row-major weights, then bias.
inline Vector edit_parameters(const ToyModel& m) {
  Vector p(m.edit.weight.size() + m.edit.bias.size());
  p << Eigen::Map<const Vector>(m.edit.weight.data(), m.edit.weight.size()), m.edit.bias;
  return p;
}

inline void set_edit_parameters(ToyModel& m, const Vector& p) {
  const Eigen::Index nw = m.edit.weight.size();
  Eigen::Map<Vector>(m.edit.weight.data(), nw) = p.head(nw);
  m.edit.bias = p.tail(m.edit.bias.size());
}

inline Vector flatten(const GradientBundle& g) {
  Vector p(g.grad_edit_weights.size() + g.grad_edit_bias.size());
  p << Eigen::Map<const Vector>(g.grad_edit_weights.data(), g.grad_edit_weights.size()), g.grad_edit_bias;
  return p;
}

}  // namespace asam::testing
