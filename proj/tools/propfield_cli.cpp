#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "propfield/error.hpp"
#include "propfield/pipeline.hpp"
#include "propfield/synthetic.hpp"

namespace fs = std::filesystem;
using namespace propfield;

namespace {

struct CommonArgs {
  fs::path scene;
  fs::path out;
  fs::path config;
  std::string provider;
  std::string endpoint;
  std::optional<std::uint64_t> seed;
  std::string property;
  std::optional<double> noise;
  bool no_thickness = false;
  bool retrieval = false;
  bool uniform_feature = false;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--scene", a.scene, "Scene bundle directory")->required();
  cmd->add_option("--out", a.out, "Artifact directory (defaults to <cache_dir>/<scene name>)");
  cmd->add_option("--config", a.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--provider", a.provider, "Model provider")->check(CLI::IsMember({"mock", "file", "http"}));
  cmd->add_option("--endpoint", a.endpoint, "Model service URL for --provider http");
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--property", a.property, "Physical property")
      ->check(CLI::IsMember({"density", "friction", "hardness", "youngs", "thermal"}));
  cmd->add_option("--noise", a.noise, "Mock embedding noise magnitude");
  cmd->add_flag("--no-thickness", a.no_thickness, "Integrate density over the carved volume instead of shells");
  cmd->add_flag("--retrieval", a.retrieval, "Assign the most similar material's value (zero-temperature limit)");
  cmd->add_flag("--uniform-feature", a.uniform_feature, "Give every point the canonical view's whole-image feature");
  cmd->add_flag("--force", a.force, "Recompute even when the cached artifact is current");
}

Pipeline make_pipeline(const CommonArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_pipeline_config(a.config);
  if (!a.provider.empty()) cfg.provider.mode = parse_provider_mode(a.provider);
  if (!a.endpoint.empty()) cfg.provider.endpoint = a.endpoint;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.property.empty()) cfg.property = parse_property_kind(a.property);
  if (a.noise) cfg.provider.noise = *a.noise;
  cfg.no_thickness = cfg.no_thickness || a.no_thickness;
  cfg.kernel.retrieval = cfg.kernel.retrieval || a.retrieval;
  cfg.uniform_feature = cfg.uniform_feature || a.uniform_feature;
  return Pipeline(a.scene, a.out, cfg, a.force);
}

void report(const char* stage, const StageResult& r) {
  for (const auto& p : r.artifacts) {
    fmt::print("{} {} {}\n", stage, r.cached ? "cached" : "wrote", p.string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-embedded physical property fields from posed RGB-D scenes"};
  app.require_subcommand(1);

  fs::path synth_out;
  std::string shape = "plate";
  std::uint64_t synth_seed = 0;
  int cameras = 0;
  int resolution = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with analytic ground truth");
  synth->add_option("--out", synth_out, "Scene directory to write")->required();
  synth->add_option("--shape", shape, "Preset")
      ->check(CLI::IsMember({"plate", "box", "hollow-box", "two-material-box", "sphere"}));
  synth->add_option("--seed", synth_seed, "Camera jitter seed");
  synth->add_option("--cameras", cameras, "Number of views");
  synth->add_option("--resolution", resolution, "Square image size in pixels");

  CommonArgs common;
  bool pca = false;
  bool ascii = false;
  struct Stage {
    const char* name;
    const char* help;
  };
  const std::vector<Stage> stages{
      {"extract", "Sample surface points from depth"},
      {"fuse", "Fuse patch embeddings onto points"},
      {"propose", "Caption the scene and propose materials"},
      {"predict", "Regress per-point property values"},
      {"mass", "Integrate mass over the density field"},
      {"export", "Write the property field as PLY"},
      {"run", "Run extract through mass (or through predict for other properties)"},
  };
  std::vector<CLI::App*> stage_cmds;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    if (std::string(s.name) == "export") {
      cmd->add_flag("--pca", pca, "Color points by the PCA of their features");
      cmd->add_flag("--ascii", ascii, "Write ASCII instead of binary PLY");
    }
    stage_cmds.push_back(cmd);
  }

  fs::path eval_out;
  fs::path predictions;
  std::vector<fs::path> runs;
  auto* eval = app.add_subcommand("eval", "Compute mass metrics");
  eval->add_option("--out", eval_out, "Report directory")->required();
  auto* pred_opt = eval->add_option("--predictions", predictions, "JSON or TSV rows of scene, pred, gt")
                       ->check(CLI::ExistingFile);
  eval->add_option("--runs", runs, "Artifact directories holding mass.json")->excludes(pred_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      SyntheticSpec spec = SyntheticSpec::preset(shape);
      spec.seed = synth_seed;
      if (cameras > 0) spec.cameras = cameras;
      if (resolution > 0) spec.width = spec.height = resolution;
      const RenderedScene scene = generate_scene(spec, synth_out);
      fmt::print("synth wrote {} ({} frames, ground-truth mass {:.6g} kg)\n", synth_out.string(),
                 scene.bundle.frames.size(), scene.ground_truth.mass_kg);
      return 0;
    }
    if (eval->parsed()) {
      if (predictions.empty() && runs.empty()) throw Error(ErrorKind::InvalidArgument, "eval needs --predictions or --runs");
      const auto rows = predictions.empty() ? collect_predictions(runs) : read_predictions(predictions);
      const MetricsReport r = write_metrics(rows, eval_out);
      std::cout << r.to_table();
      return 0;
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      Pipeline p = make_pipeline(common);
      const std::string name = stages[i].name;
      if (name == "extract") report("extract", p.extract());
      else if (name == "fuse") report("fuse", p.fuse());
      else if (name == "propose") report("propose", p.propose());
      else if (name == "predict") report("predict", p.predict());
      else if (name == "mass") report("mass", p.mass());
      else if (name == "export") report("export", p.export_ply(pca, ascii));
      else {
        report("extract", p.extract());
        report("fuse", p.fuse());
        report("propose", p.propose());
        report("predict", p.predict());
        if (p.config().property == PropertyKind::MassDensity) report("mass", p.mass());
      }
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
