#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/pipeline.hpp"
#include "propfield/ply.hpp"
#include "propfield/synthetic.hpp"
#include "support.hpp"

using namespace propfield;
using nlohmann::json;

namespace {

SyntheticSpec tiny_plate() {
  SyntheticSpec s = SyntheticSpec::plate();
  s.cameras = 8;
  s.width = 32;
  s.height = 32;
  return s;
}

template <typename Fn>
Error error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorKind::InvalidArgument, "");
}

}  // namespace

TEST_CASE("pipeline config") {
  PipelineConfig cfg;
  CHECK(cfg.resolved_kernel().temperature == 0.1);
  CHECK(cfg.resolved_material_count() == 5);
  cfg.property = PropertyKind::Friction;
  CHECK(cfg.resolved_kernel().temperature == 0.01);
  CHECK(cfg.resolved_material_count() == 3);
  cfg.temperature = 0.5;
  cfg.material_count = 7;
  CHECK(cfg.resolved_kernel().temperature == 0.5);
  CHECK(cfg.resolved_material_count() == 7);

  cfg.sampling.bbox = Aabb::tabletop_box();
  cfg.mass.clamp = false;
  cfg.provider.mode = ProviderMode::File;
  cfg.provider.language = "lang.json";
  cfg.seed = 99;
  const PipelineConfig back = pipeline_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.sampling.bbox.min == Aabb::tabletop_box().min);
  CHECK(back.provider.language == "lang.json");

  const PipelineConfig partial = pipeline_config_from_json(json::parse(R"({"mass": {"calibration": 1.0},
      "sampling": {"bbox": "tabletop"}, "kernel": {"temperature": null}})"));
  CHECK(partial.mass.calibration == 1.0);
  CHECK(partial.mass.surface_grid == 0.005);
  CHECK(partial.sampling.bbox.max == Aabb::tabletop_box().max);
  CHECK_FALSE(partial.temperature.has_value());

  CHECK(error_of([] { pipeline_config_from_json(json::parse(R"({"provider": {"mode": "cloud"}})")); }).kind() ==
        ErrorKind::Config);
  CHECK(error_of([] { pipeline_config_from_json(json::parse(R"({"sampling": {"bbox": "room"}})")); }).kind() ==
        ErrorKind::Config);
  CHECK(error_of([] { pipeline_config_from_json(json::parse(R"({"mass": {"clamp": "yes"}})")); }).kind() ==
        ErrorKind::Config);

  PipelineConfig bad;
  bad.mass.carve_grid = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = PipelineConfig{};
  bad.temperature = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = PipelineConfig{};
  bad.property = PropertyKind::Custom;
  CHECK_THROWS_AS(bad.validate(), Error);

  testing::TempDir dir;
  {
    std::ofstream f(dir / "c.json");
    f << R"({"seed": 5, "materials": {"k": 4}})";
  }
  const PipelineConfig loaded = load_pipeline_config(dir / "c.json");
  CHECK(loaded.seed == 5);
  CHECK(loaded.material_count == 4);
  CHECK_THROWS_AS(load_pipeline_config(dir / "none.json"), Error);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("pipeline stages, caching and artifacts") {
  testing::TempDir dir;
  generate_scene(tiny_plate(), dir / "scene");
  PipelineConfig cfg;
  cfg.mass.clamp = false;
  cfg.mass.calibration = 1.0;

  SUBCASE("stages refuse to run without upstream artifacts") {
    Pipeline p(dir / "scene", dir / "out", cfg);
    const Error e = error_of([&] { p.fuse(); });
    CHECK(e.kind() == ErrorKind::MissingArtifact);
    CHECK(std::string(e.what()).find("extract.json") != std::string::npos);
    p.extract();
    CHECK(std::string(error_of([&] { p.predict(); }).what()).find("fuse.json") != std::string::npos);
    CHECK(std::string(error_of([&] { p.mass(); }).what()).find("predict_mass_density.json") != std::string::npos);
  }

  SUBCASE("full run, cache hits and invalidation") {
    {
      Pipeline p(dir / "scene", dir / "out", cfg);
      CHECK_FALSE(p.extract().cached);
      CHECK_FALSE(p.fuse().cached);
      CHECK_FALSE(p.propose().cached);
      CHECK_FALSE(p.predict().cached);
      CHECK_FALSE(p.mass().cached);
      const StageResult ex = p.export_ply();
      CHECK_FALSE(ex.cached);
      REQUIRE(ex.artifacts.size() == 1);
      CHECK(std::filesystem::exists(ex.artifacts[0]));
    }
    for (const char* name : {"points.f32", "fused_points.f32", "features.f64", "dictionary_mass_density.json",
                             "field_mass_density.f64", "weights_mass_density.f64", "mass.json",
                             "field_mass_density.ply"}) {
      CAPTURE(name);
      CHECK(std::filesystem::exists(dir / "out" / name));
    }

    const json mass = read_json_file(dir / "out" / "mass.json");
    for (const char* key : {"scene", "mass_kg", "mass_low_kg", "mass_high_kg", "volume_bound_m3", "clamped"}) {
      CHECK(mass.contains(key));
    }
    CHECK(mass["mass_kg"].get<double>() == doctest::Approx(0.1).epsilon(0.25));
    CHECK(mass["mass_low_kg"].get<double>() <= mass["mass_kg"].get<double>());
    CHECK(mass["mass_high_kg"].get<double>() >= mass["mass_kg"].get<double>());

    const PlyCloud ply = read_ply(dir / "out" / "field_mass_density.ply");
    const PropertyField field = load_property_field(dir / "out", PropertyKind::MassDensity);
    REQUIRE(ply.points.size() == field.size());
    for (std::size_t i = 0; i < ply.points.size(); ++i) {
      CHECK(std::abs(ply.points[i].z() - tiny_plate().center.z()) < 1e-4);
      CHECK(ply.values[i] == field.values[i]);
    }
    const FeaturePointCloud cloud = load_feature_cloud(dir / "out");
    CHECK(cloud.size() == field.size());
    CHECK(cloud.dim() == 16);

    Pipeline again(dir / "scene", dir / "out", cfg);
    CHECK(again.extract().cached);
    CHECK(again.fuse().cached);
    CHECK(again.propose().cached);
    CHECK(again.predict().cached);
    CHECK(again.mass().cached);
    CHECK(again.export_ply().cached);

    PipelineConfig noisy = cfg;
    noisy.provider.noise = 0.2;
    Pipeline changed(dir / "scene", dir / "out", noisy);
    CHECK(changed.extract().cached);
    CHECK_FALSE(changed.fuse().cached);
    CHECK_FALSE(changed.propose().cached);
    CHECK_FALSE(changed.predict().cached);
    CHECK_FALSE(changed.mass().cached);

    std::filesystem::remove(dir / "out" / "fused_points.f32");
    CHECK_FALSE(Pipeline(dir / "scene", dir / "out", noisy).fuse().cached);
    CHECK_FALSE(Pipeline(dir / "scene", dir / "out", noisy, true).extract().cached);

    std::ofstream(dir / "scene" / "notes.txt") << "recaptured";
    CHECK_FALSE(Pipeline(dir / "scene", dir / "out", noisy).extract().cached);
  }

  SUBCASE("friction and pca export") {
    PipelineConfig friction = cfg;
    friction.property = PropertyKind::Friction;
    Pipeline p(dir / "scene", dir / "out", friction);
    CHECK(p.property_tag() == "friction");
    p.extract();
    p.fuse();
    p.propose();
    p.predict();
    const auto dict = load_dictionary(dir / "out" / "dictionary_friction.json");
    CHECK(dict.size() == 3);
    CHECK_FALSE(dict.has_thickness());
    const auto r = p.export_ply(true, true);
    CHECK(r.artifacts[0].filename() == "field_friction_pca.ply");
    const PropertyField field = load_property_field(dir / "out", std::string("friction"));
    CHECK(field.kind == PropertyKind::Friction);
    CHECK(read_ply(r.artifacts[0]).points.size() == field.size());
  }

  SUBCASE("no-thickness ablation") {
    PipelineConfig nt = cfg;
    nt.no_thickness = true;
    Pipeline p(dir / "scene", dir / "out", nt);
    p.extract();
    p.fuse();
    p.propose();
    p.predict();
    p.mass();
    CHECK(read_json_file(dir / "out" / "mass.json")["no_thickness"] == true);
  }
}

TEST_CASE("evaluation plumbing") {
  testing::TempDir dir;
  {
    std::ofstream tsv(dir / "p.tsv");
    tsv << "scene\tpred\tgt\nchair\t2\t4\nmug\t0.5\t0.25\n";
    std::ofstream js(dir / "p.json");
    js << R"([{"scene": "chair", "pred": 2, "gt": 4}, {"scene": "mug", "pred": 0.5, "gt": 0.25}])";
    std::ofstream bad(dir / "bad.tsv");
    bad << "scene\tpred\tgt\nchair\ttwo\t4\n";
  }
  const auto rows = read_predictions(dir / "p.tsv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].scene == "mug");
  CHECK(rows[1].gt == 0.25);
  const auto json_rows = read_predictions(dir / "p.json");
  CHECK(json_rows[0].pred == rows[0].pred);
  CHECK_THROWS_AS(read_predictions(dir / "bad.tsv"), Error);

  const MetricsReport report = write_metrics(rows, dir / "m");
  CHECK(report.n == 2);
  CHECK(std::filesystem::exists(dir / "m" / "metrics.tsv"));
  CHECK(read_json_file(dir / "m" / "metrics.json")["n"] == 2);

  generate_scene(tiny_plate(), dir / "scene");
  PipelineConfig cfg;
  Pipeline p(dir / "scene", dir / "run", cfg);
  p.extract();
  p.fuse();
  p.propose();
  p.predict();
  p.mass();
  const auto collected = collect_predictions({dir / "run"});
  REQUIRE(collected.size() == 1);
  CHECK(collected[0].gt == doctest::Approx(0.1));
  CHECK(collected[0].pred >= 0.01);
  CHECK(collected[0].pred <= 100.0);
}
