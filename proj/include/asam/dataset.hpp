#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "asam/linalg.hpp"

namespace asam {

struct DatasetConfig {
  int n_units = 10;
  int m_variants = 6;
  int visual = 16;
  int text = 16;
  int classes = 10;
  double noise_scale = 0.08;
  std::uint64_t seed = 0;

  bool operator==(const DatasetConfig&) const = default;
};

/// One multimodal input pair.
struct Variant {
  Vector x_v;
  Vector x_t;

  bool operator==(const Variant& o) const {
    return linalg::same_values(x_v, o.x_v) && linalg::same_values(x_t, o.x_t);
  }
};

/// Semantically equivalent input pairs sharing one label.
struct KnowledgeUnit {
  int unit_id = 0;
  int label = 0;
  Vector concept_v;
  Vector concept_t;
  std::vector<Variant> variants;

  bool operator==(const KnowledgeUnit& o) const {
    return unit_id == o.unit_id && label == o.label && linalg::same_values(concept_v, o.concept_v) &&
           linalg::same_values(concept_t, o.concept_t) && variants == o.variants;
  }
};

struct KnowledgeBase {
  DatasetConfig config;
  std::vector<KnowledgeUnit> units;

  int n_units() const { return static_cast<int>(units.size()); }
  int classes() const { return config.classes; }
  const KnowledgeUnit& unit(int unit_id) const;
  const Variant& sample(int unit_id, int variant) const { return unit(unit_id).variants.at(variant); }
  bool operator==(const KnowledgeBase&) const = default;
};

/// Addresses one variant of one unit.
struct SampleRef {
  int unit_id = 0;
  int variant = 0;

  bool operator==(const SampleRef&) const = default;
};

struct EditRequest {
  int unit_id = 0;
  int old_label = 0;
  int new_label = 0;
  Variant edit_sample;
  std::vector<Variant> heldout;
  std::vector<SampleRef> out_of_scope;
  std::uint64_t seed = 0;
};

/// Prototypes are drawn uniformly on the unit sphere of each modality and
/// rejected until every pair of concatenated prototypes is at least
/// 2 * noise_scale apart. Variants add N(0, noise_scale^2) per coordinate.
/// Unit i is labelled i mod classes.
KnowledgeBase generate_knowledge_base(const DatasetConfig& config);

/// Minimum pairwise distance between concatenated unit prototypes.
double min_prototype_distance(const KnowledgeBase& kb);

/// The first variant is the edit sample; the remaining ones are held out for
/// generality; every variant of every other unit is out of scope.
EditRequest make_edit_request(const KnowledgeBase& kb, int unit_id, int new_label, std::uint64_t seed);

/// `n_edits` requests on pairwise distinct units, each relabelled to a
/// uniformly drawn class different from its current one.
std::vector<EditRequest> make_edit_sequence(const KnowledgeBase& kb, int n_edits, std::uint64_t seed);

/// Throws ValidationError naming the first offending unit.
void validate(const KnowledgeBase& kb);

nlohmann::json to_json(const KnowledgeBase& kb);
KnowledgeBase kb_from_json(const nlohmann::json& doc);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
KnowledgeBase load_kb(const std::filesystem::path& path);

}  // namespace asam
