#include "asam/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "asam/errors.hpp"
#include "asam/json_io.hpp"
#include "asam/random.hpp"

namespace asam {
namespace {

constexpr int kMaxRejections = 10000;

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

void check_config(const DatasetConfig& c) {
  if (c.n_units < 2) throw ConfigError("n_units must be >= 2");
  if (c.m_variants < 2) throw ConfigError("m_variants must be >= 2");
  if (c.classes < 2) throw ConfigError("classes must be >= 2");
  if (c.visual < 1 || c.text < 1) throw ConfigError("input dims must be >= 1");
  if (!(c.noise_scale > 0)) throw ConfigError("noise_scale must be > 0");
}

std::string unit_field(std::size_t i) { return "units[" + std::to_string(i) + "]"; }

}  // namespace

const KnowledgeUnit& KnowledgeBase::unit(int unit_id) const {
  if (unit_id < 0 || unit_id >= n_units()) {
    throw InvalidEditError("unit " + std::to_string(unit_id) + " does not exist");
  }
  return units[static_cast<std::size_t>(unit_id)];
}

KnowledgeBase generate_knowledge_base(const DatasetConfig& config) {
  check_config(config);
  Rng rng(config.seed);
  const double min_separation = 2.0 * config.noise_scale;

  KnowledgeBase kb;
  kb.config = config;
  std::vector<Vector> prototypes;
  int rejections = 0;
  while (static_cast<int>(prototypes.size()) < config.n_units) {
    const Vector v = random_unit_vector(rng, config.visual);
    const Vector t = random_unit_vector(rng, config.text);
    const Vector joint = concat(v, t);
    const bool separated = std::all_of(prototypes.begin(), prototypes.end(), [&](const Vector& p) {
      return (p - joint).norm() >= min_separation;
    });
    if (!separated) {
      if (++rejections > kMaxRejections) {
        throw ConfigError("prototype separation unachievable after " +
                          std::to_string(kMaxRejections) + " rejections");
      }
      continue;
    }
    prototypes.push_back(joint);
    KnowledgeUnit unit;
    unit.unit_id = static_cast<int>(kb.units.size());
    unit.label = unit.unit_id % config.classes;
    unit.concept_v = v;
    unit.concept_t = t;
    kb.units.push_back(std::move(unit));
  }

  for (auto& unit : kb.units) {
    for (int j = 0; j < config.m_variants; ++j) {
      Variant var;
      var.x_v = unit.concept_v + gaussian_vector(rng, config.visual, config.noise_scale);
      var.x_t = unit.concept_t + gaussian_vector(rng, config.text, config.noise_scale);
      unit.variants.push_back(std::move(var));
    }
  }
  return kb;
}

double min_prototype_distance(const KnowledgeBase& kb) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kb.units.size(); ++i) {
    const Vector a = concat(kb.units[i].concept_v, kb.units[i].concept_t);
    for (std::size_t j = i + 1; j < kb.units.size(); ++j) {
      const Vector b = concat(kb.units[j].concept_v, kb.units[j].concept_t);
      best = std::min(best, (a - b).norm());
    }
  }
  return best;
}

EditRequest make_edit_request(const KnowledgeBase& kb, int unit_id, int new_label, std::uint64_t seed) {
  const KnowledgeUnit& unit = kb.unit(unit_id);
  if (new_label < 0 || new_label >= kb.classes()) {
    throw InvalidEditError("new label " + std::to_string(new_label) + " outside [0, " +
                           std::to_string(kb.classes()) + ")");
  }
  if (new_label == unit.label) {
    throw InvalidEditError("unit " + std::to_string(unit_id) + " already has label " +
                           std::to_string(new_label));
  }
  EditRequest req;
  req.unit_id = unit_id;
  req.old_label = unit.label;
  req.new_label = new_label;
  req.seed = seed;
  req.edit_sample = unit.variants.front();
  req.heldout.assign(unit.variants.begin() + 1, unit.variants.end());
  for (const auto& other : kb.units) {
    if (other.unit_id == unit_id) continue;
    for (int j = 0; j < static_cast<int>(other.variants.size()); ++j) {
      req.out_of_scope.push_back({other.unit_id, j});
    }
  }
  return req;
}

std::vector<EditRequest> make_edit_sequence(const KnowledgeBase& kb, int n_edits, std::uint64_t seed) {
  if (n_edits < 1 || n_edits > kb.n_units()) {
    throw InvalidEditError("n_edits must be in [1, " + std::to_string(kb.n_units()) + "]");
  }
  Rng rng(seed);
  std::vector<int> ids(static_cast<std::size_t>(kb.n_units()));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::uniform_int_distribution<int> pick(0, kb.classes() - 2);
  std::vector<EditRequest> out;
  for (int k = 0; k < n_edits; ++k) {
    const int id = ids[static_cast<std::size_t>(k)];
    const int current = kb.unit(id).label;
    const int r = pick(rng);
    const int label = r < current ? r : r + 1;
    out.push_back(make_edit_request(kb, id, label, sub_seed(seed, static_cast<std::uint64_t>(k))));
  }
  return out;
}

void validate(const KnowledgeBase& kb) {
  const auto& c = kb.config;
  if (c.classes < 2) throw ValidationError("config.classes must be >= 2");
  if (kb.units.size() < 2) throw ValidationError("knowledge base needs at least 2 units");
  if (static_cast<int>(kb.units.size()) != c.n_units) {
    throw ValidationError("config.n_units does not match the number of units");
  }
  for (std::size_t i = 0; i < kb.units.size(); ++i) {
    const auto& u = kb.units[i];
    const std::string where = unit_field(i) + " (unit_id " + std::to_string(u.unit_id) + ")";
    if (u.unit_id != static_cast<int>(i)) throw ValidationError(where + ": unit_id must equal its index");
    if (u.label < 0 || u.label >= c.classes) {
      throw ValidationError(where + ": label " + std::to_string(u.label) + " outside [0, " +
                            std::to_string(c.classes) + ")");
    }
    if (u.variants.size() < 2) throw ValidationError(where + ": needs at least 2 variants");
    if (u.concept_v.size() != c.visual || u.concept_t.size() != c.text) {
      throw ValidationError(where + ": prototype dimension mismatch");
    }
    for (std::size_t j = 0; j < u.variants.size(); ++j) {
      const auto& var = u.variants[j];
      if (var.x_v.size() != c.visual || var.x_t.size() != c.text) {
        throw ValidationError(where + ".variants[" + std::to_string(j) + "]: dimension mismatch");
      }
      if (!var.x_v.allFinite() || !var.x_t.allFinite()) {
        throw ValidationError(where + ".variants[" + std::to_string(j) + "]: non-finite entry");
      }
    }
  }
}

nlohmann::json to_json(const KnowledgeBase& kb) {
  nlohmann::json config = {
      {"n_units", kb.config.n_units},     {"m_variants", kb.config.m_variants},
      {"visual", kb.config.visual},       {"text", kb.config.text},
      {"classes", kb.config.classes},     {"noise_scale", kb.config.noise_scale},
      {"seed", kb.config.seed},
  };
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : kb.units) {
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& var : u.variants) {
      variants.push_back({{"x_v", io::to_json(var.x_v)}, {"x_t", io::to_json(var.x_t)}});
    }
    units.push_back({{"unit_id", u.unit_id},
                     {"label", u.label},
                     {"concept_v", io::to_json(u.concept_v)},
                     {"concept_t", io::to_json(u.concept_t)},
                     {"variants", std::move(variants)}});
  }
  return {{"config", std::move(config)}, {"units", std::move(units)}};
}

KnowledgeBase kb_from_json(const nlohmann::json& doc) {
  KnowledgeBase kb;
  const auto& config = io::member(doc, "config", "kb");
  kb.config.n_units = static_cast<int>(io::integer_member(config, "n_units", "config"));
  kb.config.m_variants = static_cast<int>(io::integer_member(config, "m_variants", "config"));
  kb.config.visual = static_cast<int>(io::integer_member(config, "visual", "config"));
  kb.config.text = static_cast<int>(io::integer_member(config, "text", "config"));
  kb.config.classes = static_cast<int>(io::integer_member(config, "classes", "config"));
  kb.config.noise_scale = io::number_member(config, "noise_scale", "config");
  kb.config.seed = io::member(config, "seed", "config").get<std::uint64_t>();

  const auto& units = io::member(doc, "units", "kb");
  if (!units.is_array()) throw ValidationError("units: expected an array");
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string where = unit_field(i);
    const auto& ju = units[i];
    KnowledgeUnit u;
    u.unit_id = static_cast<int>(io::integer_member(ju, "unit_id", where));
    u.label = static_cast<int>(io::integer_member(ju, "label", where));
    u.concept_v = io::vector_from_json(io::member(ju, "concept_v", where), where + ".concept_v");
    u.concept_t = io::vector_from_json(io::member(ju, "concept_t", where), where + ".concept_t");
    const auto& vars = io::member(ju, "variants", where);
    if (!vars.is_array()) throw ValidationError(where + ".variants: expected an array");
    for (std::size_t j = 0; j < vars.size(); ++j) {
      const std::string vw = where + ".variants[" + std::to_string(j) + "]";
      Variant var;
      var.x_v = io::vector_from_json(io::member(vars[j], "x_v", vw), vw + ".x_v");
      var.x_t = io::vector_from_json(io::member(vars[j], "x_t", vw), vw + ".x_t");
      u.variants.push_back(std::move(var));
    }
    kb.units.push_back(std::move(u));
  }
  validate(kb);
  return kb;
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  io::write_json_file(path, to_json(kb));
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  return kb_from_json(io::read_json_file(path));
}

}  // namespace asam
