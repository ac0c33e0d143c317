#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "propfield/fusion.hpp"
#include "propfield/integration.hpp"
#include "propfield/materials.hpp"
#include "propfield/metrics.hpp"
#include "propfield/pointcloud.hpp"
#include "propfield/providers.hpp"
#include "propfield/regression.hpp"

namespace propfield {

enum class ProviderMode { Mock, File, Http };

std::string_view to_string(ProviderMode mode);
ProviderMode parse_provider_mode(std::string_view name);

struct ProviderConfig {
  ProviderMode mode = ProviderMode::Mock;
  std::string endpoint = "http://127.0.0.1:8765";
  /// Mock embedding noise magnitude.
  double noise = 0.0;
  std::size_t dim = 16;
  /// File mode inputs.
  std::filesystem::path patch_embeddings;
  std::filesystem::path text_embeddings;
  std::filesystem::path language;
};

struct PipelineConfig {
  SamplingConfig sampling;
  FusionConfig fusion;
  KernelConfig kernel;
  /// Overrides the per-property default temperature when set.
  std::optional<double> temperature;
  MassConfig mass;
  /// 0 selects the per-property default.
  std::size_t material_count = 0;
  std::size_t retries = 3;
  ProviderConfig provider;
  std::filesystem::path cache_dir;
  std::uint64_t seed = 0;

  PropertyKind property = PropertyKind::MassDensity;
  std::string custom_property;
  std::string custom_units;
  bool no_thickness = false;
  bool uniform_feature = false;

  /// Throws Error(Config).
  void validate() const;
  KernelConfig resolved_kernel() const;
  std::size_t resolved_material_count() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Fields missing from doc keep the values of base.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Lazily constructed providers for the configured mode.
class ProviderSet {
 public:
  ProviderSet(ProviderConfig cfg, std::filesystem::path scene_dir, std::uint64_t seed);
  ~ProviderSet();

  PatchEmbeddingProvider& patches();
  TextEmbeddingProvider& text();
  CaptionProvider& captioner();
  CompletionProvider& completion();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct StageResult {
  bool cached = false;
  std::string hash;
  std::vector<std::filesystem::path> artifacts;
};

/// Pipeline stages over one scene. Artifacts land in out_dir; each stage
/// records a stamp whose hash covers its config and upstream stamps, and is
/// skipped when the stamp and artifacts are current (unless force is set).
class Pipeline {
 public:
  Pipeline(std::filesystem::path scene_dir, std::filesystem::path out_dir, PipelineConfig cfg, bool force = false);
  ~Pipeline();

  StageResult extract();
  StageResult fuse();
  StageResult propose();
  StageResult predict();
  StageResult mass();
  /// Exports the current property field; with pca the colors come from the
  /// fused features instead of the value colormap.
  StageResult export_ply(bool pca = false, bool ascii = false);

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_; }

  std::string property_tag() const;

 private:
  SceneBundle load_bundle() const;
  std::string require_stamp(const std::string& stage) const;
  std::filesystem::path require(const std::string& name) const;
  std::optional<StageResult> cached(const std::string& stage, const std::string& hash,
                                    const std::vector<std::string>& artifacts) const;
  void write_stamp(const std::string& stage, const std::string& hash, nlohmann::json info) const;
  StageResult done(const std::string& hash, const std::vector<std::string>& artifacts) const;
  ProviderSet& providers();

  std::filesystem::path scene_;
  std::filesystem::path out_;
  PipelineConfig cfg_;
  bool force_;
  std::unique_ptr<ProviderSet> providers_;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

// Artifact readers shared by the CLI, tests and bindings.
FeaturePointCloud load_feature_cloud(const std::filesystem::path& out_dir);
PropertyField load_property_field(const std::filesystem::path& out_dir, PropertyKind kind);
/// tag is the property name used in artifact file names.
PropertyField load_property_field(const std::filesystem::path& out_dir, const std::string& tag);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Reads mass.json from each run directory and the ground_truth.json of the
/// scene recorded there.
std::vector<PredictionRow> collect_predictions(const std::vector<std::filesystem::path>& run_dirs);
/// JSON list of {scene, pred, gt}, or TSV with a scene/pred/gt header.
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);
/// Writes metrics.tsv and metrics.json into out_dir.
MetricsReport write_metrics(const std::vector<PredictionRow>& rows, const std::filesystem::path& out_dir);

}  // namespace propfield
