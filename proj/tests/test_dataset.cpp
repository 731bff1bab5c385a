#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "asam/dataset.hpp"
#include "asam/errors.hpp"
#include "asam/json_io.hpp"

namespace asam {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "asam_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

DatasetConfig config(int units, int variants, std::uint64_t seed) {
  DatasetConfig c;
  c.n_units = units;
  c.m_variants = variants;
  c.seed = seed;
  return c;
}

TEST(GenerateKnowledgeBase, TwoUnitsTwoVariants) {
  const KnowledgeBase kb = generate_knowledge_base(config(2, 2, 3));
  ASSERT_EQ(kb.n_units(), 2);
  EXPECT_EQ(kb.units[0].label, 0);
  EXPECT_EQ(kb.units[1].label, 1);
  int pairs = 0;
  for (const auto& u : kb.units) pairs += static_cast<int>(u.variants.size());
  EXPECT_EQ(pairs, 4);
}

TEST(GenerateKnowledgeBase, VanishingNoiseVariantsEqualPrototype) {
  DatasetConfig c = config(4, 3, 5);
  c.noise_scale = 1e-300;
  const KnowledgeBase kb = generate_knowledge_base(c);
  for (const auto& u : kb.units) {
    for (const auto& v : u.variants) {
      EXPECT_TRUE(linalg::same_values(v.x_v, u.concept_v));
      EXPECT_TRUE(linalg::same_values(v.x_t, u.concept_t));
    }
  }
}

TEST(GenerateKnowledgeBase, SeparationHoldsOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const KnowledgeBase kb = generate_knowledge_base(config(10, 3, seed));
    EXPECT_GE(min_prototype_distance(kb), 2 * kb.config.noise_scale) << "seed " << seed;
  }
}

TEST(GenerateKnowledgeBase, StructuralInvariants) {
  const KnowledgeBase kb = generate_knowledge_base(config(25, 4, 7));
  for (int i = 0; i < kb.n_units(); ++i) {
    const auto& u = kb.units[static_cast<std::size_t>(i)];
    EXPECT_EQ(u.unit_id, i);
    EXPECT_GE(u.label, 0);
    EXPECT_LT(u.label, kb.classes());
    EXPECT_EQ(u.variants.size(), 4u);
  }
  EXPECT_NO_THROW(validate(kb));
}

TEST(GenerateKnowledgeBase, DeterministicForSeed) {
  EXPECT_EQ(generate_knowledge_base(config(6, 3, 9)), generate_knowledge_base(config(6, 3, 9)));
  EXPECT_FALSE(generate_knowledge_base(config(6, 3, 9)) == generate_knowledge_base(config(6, 3, 10)));
}

TEST(GenerateKnowledgeBase, InvalidConfigs) {
  EXPECT_THROW(generate_knowledge_base(config(3, 1, 0)), ConfigError);
  EXPECT_THROW(generate_knowledge_base(config(0, 3, 0)), ConfigError);
  DatasetConfig c = config(3, 3, 0);
  c.classes = 1;
  EXPECT_THROW(generate_knowledge_base(c), ConfigError);
  c = config(3, 3, 0);
  c.noise_scale = -0.1;
  EXPECT_THROW(generate_knowledge_base(c), ConfigError);
  c.noise_scale = 0;
  EXPECT_THROW(generate_knowledge_base(c), ConfigError);
}

TEST(MakeEditRequest, RelabelThreeToSeven) {
  const KnowledgeBase kb = generate_knowledge_base(config(10, 6, 1));
  const EditRequest r = make_edit_request(kb, 3, 7, 0);
  EXPECT_EQ(r.old_label, 3);
  EXPECT_EQ(r.new_label, 7);
  EXPECT_EQ(r.heldout.size(), 5u);
  EXPECT_EQ(r.edit_sample, kb.unit(3).variants.front());
  for (const auto& h : r.heldout) EXPECT_FALSE(h == r.edit_sample);
}

TEST(MakeEditRequest, OutOfScopePoolIsEveryOtherVariant) {
  const KnowledgeBase kb = generate_knowledge_base(config(5, 4, 2));
  const EditRequest r = make_edit_request(kb, 2, 0, 0);
  EXPECT_EQ(r.out_of_scope.size(), 16u);
  for (const auto& s : r.out_of_scope) EXPECT_NE(s.unit_id, 2);
}

TEST(MakeEditRequest, Rejections) {
  const KnowledgeBase kb = generate_knowledge_base(config(5, 4, 2));
  EXPECT_THROW(make_edit_request(kb, 2, kb.unit(2).label, 0), InvalidEditError);
  EXPECT_THROW(make_edit_request(kb, 2, 10, 0), InvalidEditError);
  EXPECT_THROW(make_edit_request(kb, 5, 1, 0), InvalidEditError);
}

TEST(MakeEditSequence, DistinctUnitsAndChangedLabels) {
  const KnowledgeBase kb = generate_knowledge_base(config(20, 4, 3));
  const auto seq = make_edit_sequence(kb, 10, 4);
  ASSERT_EQ(seq.size(), 10u);
  std::set<int> units;
  for (const auto& r : seq) {
    units.insert(r.unit_id);
    EXPECT_NE(r.new_label, kb.unit(r.unit_id).label);
  }
  EXPECT_EQ(units.size(), 10u);
  EXPECT_THROW(make_edit_sequence(kb, 21, 4), InvalidEditError);
}

TEST(KbJson, RoundTripIsStructurallyEqualAndByteStable) {
  const KnowledgeBase kb = generate_knowledge_base(config(7, 3, 5));
  const fs::path a = scratch("kb_a.json");
  const fs::path b = scratch("kb_b.json");
  save_kb(kb, a);
  const KnowledgeBase back = load_kb(a);
  EXPECT_EQ(back, kb);
  save_kb(back, b);
  std::ifstream fa(a), fb(b);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {});
  const std::string sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(KbJson, TruncatedFileIsAParseError) {
  const KnowledgeBase kb = generate_knowledge_base(config(3, 2, 5));
  const std::string text = to_json(kb).dump(1);
  const fs::path p = scratch("truncated.json");
  std::ofstream(p) << text.substr(0, text.size() / 2);
  try {
    load_kb(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated.json"), std::string::npos);
  }
}

TEST(KbJson, LabelOutOfRangeNamesTheUnit) {
  nlohmann::json j = to_json(generate_knowledge_base(config(4, 2, 5)));
  j["units"][2]["label"] = 10;
  try {
    kb_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("units[2]"), std::string::npos) << e.what();
  }
}

TEST(KbJson, MissingFieldAndBadVectors) {
  nlohmann::json j = to_json(generate_knowledge_base(config(4, 2, 5)));
  nlohmann::json no_label = j;
  no_label["units"][0].erase("label");
  EXPECT_THROW(kb_from_json(no_label), ValidationError);
  nlohmann::json short_vec = j;
  short_vec["units"][1]["variants"][0]["x_v"].erase(0);
  EXPECT_THROW(kb_from_json(short_vec), ValidationError);
  nlohmann::json text_entry = j;
  text_entry["units"][1]["concept_t"][0] = "x";
  EXPECT_THROW(kb_from_json(text_entry), ValidationError);
}

TEST(JsonIo, ParseErrorCarriesLineAndColumn) {
  try {
    io::parse_json_text("{\n  \"a\": [1,\n  }", "inline");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("inline:3:"), std::string::npos) << e.what();
  }
}

TEST(JsonIo, DoublesRoundTripExactly) {
  Vector v(5);
  v << 0.1, 1.0 / 3.0, -2.5e-300, 1e308, 6.02214076e23;
  EXPECT_TRUE(linalg::same_values(io::vector_from_json(io::parse_json_text(io::to_json(v).dump(), "t"), "v"), v));
}

}  // namespace
}  // namespace asam
