#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "propfield/error.hpp"
#include "propfield/materials.hpp"
#include "support.hpp"

using namespace propfield;

namespace {

/// Replies from a queue and records every prompt.
class Scripted : public CompletionProvider {
 public:
  explicit Scripted(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const std::string& system, const std::string& user) override {
    prompts.push_back({system, user});
    if (replies_.empty()) throw Error(ErrorKind::Provider, "script exhausted");
    auto r = replies_.front();
    replies_.pop_front();
    return r;
  }
  std::vector<Prompt> prompts;

 private:
  std::deque<std::string> replies_;
};

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidArgument;
}

SceneBundle masked_bundle(const std::vector<std::size_t>& areas) {
  SceneBundle b;
  for (std::size_t a : areas) {
    Frame f = testing::plane_frame(10, 10, 1.0f);
    f.mask = Raster<std::uint8_t>(10, 10, 0);
    for (std::size_t i = 0; i < a; ++i) f.mask->data[i] = 1;
    b.frames.push_back(f);
  }
  return b;
}

const std::string kFive =
    "(wood: 600-900 kg/m^3);(steel: 7850 kg/m^3);(plastic: 900-1400 kg/m^3);(fabric: 100-400 kg/m^3);"
    "(glass: 2500 kg/m^3)";

}  // namespace

TEST_CASE("property defaults") {
  CHECK(default_material_count(PropertyKind::MassDensity) == 5);
  CHECK(default_temperature(PropertyKind::MassDensity) == 0.1);
  CHECK(default_material_count(PropertyKind::Friction) == 3);
  CHECK(default_temperature(PropertyKind::Friction) == 0.01);
  CHECK(default_material_count(PropertyKind::Hardness) == 3);
  CHECK(default_temperature(PropertyKind::Hardness) == 0.01);
  CHECK(parse_property_kind("density") == PropertyKind::MassDensity);
  CHECK(parse_property_kind("youngs") == PropertyKind::YoungsModulus);
  CHECK(parse_property_kind("thermal") == PropertyKind::ThermalConductivity);
  CHECK(parse_property_kind(to_string(PropertyKind::Hardness)) == PropertyKind::Hardness);
  CHECK_THROWS_AS(parse_property_kind("color"), Error);
}

TEST_CASE("parse_material_response grammar") {
  SUBCASE("colon form with ranges") {
    const auto e = parse_material_response("(oak wood: 600-900 kg/m^3);(steel: 7850 kg/m^3)", 2,
                                           PropertyKind::MassDensity);
    REQUIRE(e.size() == 2);
    CHECK(e[0].name == "oak wood");
    CHECK(e[0].value == ValueRange{600, 900});
    CHECK(e[1].name == "steel");
    CHECK(e[1].value == ValueRange{7850, 7850});
  }
  SUBCASE("comma form with unicode units and an en dash") {
    const auto e = parse_material_response("(Aluminum, 2700kg/m³), (Oak Wood, 650–900 kg/m3)", 2,
                                           PropertyKind::MassDensity);
    REQUIRE(e.size() == 2);
    CHECK(e[0].name == "Aluminum");
    CHECK(e[0].value == ValueRange{2700, 2700});
    CHECK(e[1].name == "Oak Wood");
    CHECK(e[1].value == ValueRange{650, 900});
  }
  SUBCASE("whitespace and latex units") {
    const auto e = parse_material_response("  ( rubber :  1100 - 1200  kg/m$^3$ ) ;\n( cork: 240 kg/m^3 )  ", 2,
                                           PropertyKind::MassDensity);
    REQUIRE(e.size() == 2);
    CHECK(e[0].name == "rubber");
    CHECK(e[0].value == ValueRange{1100, 1200});
  }
  SUBCASE("hardness Shore tags") {
    const auto e = parse_material_response("(rubber: 60-80, Shore A);(steel: 80, Shore D);(ABS: 75, <Shore D>)", 3,
                                           PropertyKind::Hardness);
    REQUIRE(e.size() == 3);
    CHECK(e[0].shore == ShoreScale::A);
    CHECK(e[0].value == ValueRange{60, 80});
    CHECK(e[1].shore == ShoreScale::D);
    CHECK(e[2].shore == ShoreScale::D);
  }
  SUBCASE("friction is unitless") {
    const auto e = parse_material_response("(rubber: 0.6-0.9);(steel: 0.5);(ice: 0.02-0.1)", 3, PropertyKind::Friction);
    CHECK(e[2].value == ValueRange{0.02, 0.1});
  }
  SUBCASE("errors") {
    CHECK(kind_of([] { parse_material_response("(a: 1 kg/m^3)", 2, PropertyKind::MassDensity); }) ==
          ErrorKind::CountMismatch);
    CHECK(kind_of([] { parse_material_response("(: 1 kg/m^3)", 1, PropertyKind::MassDensity); }) == ErrorKind::Parse);
    CHECK(kind_of([] { parse_material_response("(wood: heavy)", 1, PropertyKind::MassDensity); }) == ErrorKind::Parse);
    CHECK(kind_of([] { parse_material_response("(wood: 900-600 kg/m^3)", 1, PropertyKind::MassDensity); }) ==
          ErrorKind::Parse);
    CHECK(kind_of([] { parse_material_response("(wood: 600 furlongs)", 1, PropertyKind::MassDensity); }) ==
          ErrorKind::Parse);
    CHECK(kind_of([] { parse_material_response("I cannot tell from the caption.", 1, PropertyKind::MassDensity); }) ==
          ErrorKind::Parse);
    try {
      parse_material_response("(wood: heavy)", 1, PropertyKind::MassDensity);
    } catch (const ParseError& e) {
      CHECK(e.raw() == "(wood: heavy)");
      CHECK(std::string(e.what()).find("heavy") != std::string::npos);
    }
  }
}

TEST_CASE("render and parse round trip") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.01, 9000.0);
  const std::vector<std::string> words{"oak", "pine", "steel", "rubber", "felt", "glass", "cork", "brass"};
  for (int trial = 0; trial < 200; ++trial) {
    const PropertyKind kind = trial % 3 == 0 ? PropertyKind::MassDensity
                              : trial % 3 == 1 ? PropertyKind::Friction
                                               : PropertyKind::Hardness;
    std::vector<MaterialEntry> entries;
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 6);
    for (std::size_t i = 0; i < k; ++i) {
      MaterialEntry e;
      e.name = words[(trial + i) % words.size()] + " " + std::to_string(i);
      double a = u(rng);
      double b = trial % 2 ? a : u(rng);
      if (kind == PropertyKind::Hardness) {
        a = std::fmod(a, 100.0);
        b = std::fmod(b, 100.0);
        e.shore = i % 2 ? ShoreScale::D : ShoreScale::A;
      }
      e.value = {std::min(a, b), std::max(a, b)};
      entries.push_back(e);
    }
    CHECK(parse_material_response(render_material_response(entries, kind), k, kind) == entries);
  }
}

TEST_CASE("combine_shore_scales") {
  std::vector<MaterialEntry> e{{"a", {70, 70}, std::nullopt, ShoreScale::A},
                               {"b", {60, 60}, std::nullopt, ShoreScale::D},
                               {"c", {90, 100}, std::nullopt, ShoreScale::A}};
  const auto out = combine_shore_scales(e);
  CHECK(out[0].value == ValueRange{70, 70});
  CHECK(out[1].value == ValueRange{160, 160});
  CHECK(out[2].value == ValueRange{90, 100});
  e[0].shore.reset();
  CHECK_THROWS_AS(combine_shore_scales(e), Error);
}

TEST_CASE("select_canonical_view") {
  CHECK(select_canonical_view(masked_bundle({10, 20, 30, 40}), 0) == 2);
  CHECK(select_canonical_view(masked_bundle({40, 10, 30, 20}), 0) == 2);
  CHECK(select_canonical_view(masked_bundle({40, 30, 20, 10}), 0) == 1);
  CHECK(select_canonical_view(masked_bundle({7}), 0) == 0);
  for (std::size_t n = 2; n < 12; ++n) {
    std::vector<std::size_t> areas;
    for (std::size_t i = 0; i < n; ++i) areas.push_back((i * 7) % n + 1);
    const SceneBundle b = masked_bundle(areas);
    const std::size_t pick = select_canonical_view(b, 0);
    std::vector<std::size_t> sorted = areas;
    std::sort(sorted.begin(), sorted.end());
    CHECK(b.frames[pick].mask_area() == sorted[(3 * (n - 1)) / 4]);
  }
  SceneBundle plain;
  for (int i = 0; i < 9; ++i) plain.frames.push_back(testing::plane_frame(4, 4, 1.0f));
  const std::size_t a = select_canonical_view(plain, 17);
  CHECK(a < 9);
  CHECK(select_canonical_view(plain, 17) == a);
}

TEST_CASE("prompts") {
  const Prompt density = render_property_prompt(PropertyKind::MassDensity, "a wooden table with metal legs", 5);
  CHECK(density.system.find("{k}") == std::string::npos);
  CHECK(density.system.find("{format}") == std::string::npos);
  CHECK(density.system.find("5 materials") != std::string::npos);
  CHECK(density.system.find("(material 1: low-high kg/m^3)") != std::string::npos);
  CHECK(density.user == "Caption: \"a wooden table with metal legs\"");
  CHECK(caption_prompt().find("Give a detailed description of the object") != std::string::npos);

  const Prompt hardness = render_property_prompt(PropertyKind::Hardness, "a shoe", 3);
  CHECK(hardness.system.find("Shore") != std::string::npos);

  CHECK_THROWS_AS(render_property_prompt(PropertyKind::YoungsModulus, "a shoe", 2), Error);
  ProposalOptions opts;
  opts.material_names = {"rubber", "leather"};
  const Prompt youngs = render_property_prompt(PropertyKind::YoungsModulus, "a shoe", 2, opts);
  CHECK(youngs.user.find("Materials: \"rubber, leather\"") != std::string::npos);

  const Prompt thick = render_thickness_prompt("a chair", {"fabric", "plastic"});
  CHECK(thick.system.find("(fabric: 0.1-0.2 cm)") != std::string::npos);
  CHECK(thick.user.find("fabric, plastic") != std::string::npos);

  CHECK_THROWS_AS(render_property_prompt(PropertyKind::Custom, "x", 2), Error);
  opts.custom_property = "melting point";
  opts.custom_units = "K";
  const Prompt custom = render_property_prompt(PropertyKind::Custom, "x", 2, opts);
  CHECK(custom.system.find("melting point") != std::string::npos);
  CHECK(custom.system.find("{property}") == std::string::npos);
}

TEST_CASE("propose_materials and estimate_thickness") {
  SUBCASE("scripted round trip") {
    Scripted llm({kFive, "(wood: 1.0-2.0 cm);(steel: 0.1-0.3 cm);(plastic: 0.3-1.0 cm);(fabric: 0.1-0.2 cm);"
                         "(glass: 0.5 cm)"});
    const auto dict = propose_materials("a wooden table with metal legs", PropertyKind::MassDensity, 5, llm);
    CHECK(dict.size() == 5);
    CHECK(dict.units == "kg/m^3");
    CHECK(dict.caption == "a wooden table with metal legs");
    const auto thick = estimate_thickness(dict.caption, dict, llm);
    REQUIRE(thick.entries[0].thickness_cm);
    CHECK(thick.entries[0].thickness_cm->midpoint() == 1.5);
    CHECK(thick.entries[3].thickness_cm == ValueRange{0.1, 0.2});
    CHECK(thick.has_thickness());
    CHECK_THROWS_AS(estimate_thickness(dict.caption, thick, llm), Error);
  }
  SUBCASE("retries with the parse error appended") {
    Scripted llm({"no idea", kFive});
    const auto dict = propose_materials("a table", PropertyKind::MassDensity, 5, llm);
    CHECK(dict.size() == 5);
    REQUIRE(llm.prompts.size() == 2);
    CHECK(llm.prompts[0].user == "Caption: \"a table\"");
    CHECK(llm.prompts[1].user.find("could not be parsed") != std::string::npos);
  }
  SUBCASE("hard failure after the retry budget keeps the raw text") {
    Scripted llm({"a", "b", "c", "d", "e"});
    try {
      propose_materials("a table", PropertyKind::MassDensity, 5, llm);
      FAIL("expected failure");
    } catch (const ParseError& e) {
      CHECK(e.raw() == "d");
      CHECK(llm.prompts.size() == 4);
    }
    Scripted bad({"(x: 1 kg/m^3)", "(x: 1 kg/m^3)", "(x: 1 kg/m^3)", "(wood: z kg/m^3);(x: 1 kg/m^3)"});
    CHECK(kind_of([&] { propose_materials("a table", PropertyKind::MassDensity, 2, bad); }) ==
          ErrorKind::UnparseableResponse);
    Scripted short_list({"(x: 1 kg/m^3)", "(wood: z kg/m^3);(x: 1 kg/m^3)", "(x: 1 kg/m^3)", "(x: 1 kg/m^3)"});
    CHECK(kind_of([&] { propose_materials("a table", PropertyKind::MassDensity, 2, short_list); }) ==
          ErrorKind::CountMismatch);
  }
  SUBCASE("thickness count mismatch") {
    Scripted llm({kFive, "(wood: 1 cm);(steel: 1 cm);(plastic: 1 cm);(fabric: 1 cm)"});
    const auto dict = propose_materials("a table", PropertyKind::MassDensity, 5, llm);
    CHECK(kind_of([&] { estimate_thickness("a table", dict, llm, 0); }) == ErrorKind::CountMismatch);
  }
  SUBCASE("duplicate names are rejected and retried") {
    Scripted llm({"(oak: 700 kg/m^3);(Oak: 800 kg/m^3)", "(oak: 700 kg/m^3);(pine: 500 kg/m^3)"});
    CHECK(propose_materials("a table", PropertyKind::MassDensity, 2, llm).size() == 2);
  }
  SUBCASE("provider errors propagate") {
    Scripted llm({});
    CHECK(kind_of([&] { propose_materials("a table", PropertyKind::MassDensity, 5, llm); }) == ErrorKind::Provider);
  }
  SUBCASE("empty caption") {
    Scripted llm({kFive});
    CHECK_THROWS_AS(propose_materials("  ", PropertyKind::MassDensity, 5, llm), Error);
  }
}

TEST_CASE("dictionary file round trip") {
  testing::TempDir dir;
  MaterialDictionary d;
  d.property_kind = PropertyKind::Hardness;
  d.units = std::string(default_units(PropertyKind::Hardness));
  d.caption = "a \"quoted\" caption";
  d.entries = {{"rubber", {60, 80}, std::nullopt, ShoreScale::A}, {"steel", {170, 180}, ValueRange{0.1, 0.2}, ShoreScale::D}};
  save_dictionary(d, dir / "d.json");
  const auto back = load_dictionary(dir / "d.json");
  CHECK(back.property_kind == d.property_kind);
  CHECK(back.units == d.units);
  CHECK(back.caption == d.caption);
  CHECK(back.entries == d.entries);
}
