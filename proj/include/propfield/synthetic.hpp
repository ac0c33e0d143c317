#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "propfield/providers.hpp"
#include "propfield/scene_io.hpp"

namespace propfield {

enum class SyntheticShape { Plate, Box, TwoMaterialBox, Sphere };

std::string_view to_string(SyntheticShape shape);
SyntheticShape parse_shape(std::string_view name);

struct SyntheticPart {
  std::string name;
  /// Property value (kg/m^3 for density scenes).
  double value = 1000.0;
  double thickness_cm = 1.0;
};

/// Object geometry in metric world coordinates. The camera orbit is centered
/// on the world origin; the object sits at `center`.
struct SyntheticSpec {
  SyntheticShape shape = SyntheticShape::Plate;
  /// Plate: x,y side lengths. Box: x,y,z side lengths. Sphere: x = radius.
  Eigen::Vector3d dimensions = Eigen::Vector3d(0.1, 0.1, 0.1);
  Eigen::Vector3d center = Eigen::Vector3d(0.0021, -0.0013, 0.0017);
  /// One part, or (top face, remaining faces) for the two-material box.
  std::vector<SyntheticPart> parts;
  int cameras = 20;
  double orbit_radius = 0.3;
  double elevation_deg = 35.0;
  int width = 64;
  int height = 64;
  bool masks = true;
  std::uint64_t seed = 0;
  std::string name = "synthetic";

  void validate() const;
  double bounding_radius() const;

  static SyntheticSpec plate();
  static SyntheticSpec box();
  static SyntheticSpec hollow_box();
  static SyntheticSpec two_material_box();
  static SyntheticSpec sphere();
  static SyntheticSpec preset(std::string_view name);
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

struct SurfaceHit {
  double t;  // ray parameter; equals z-depth for rays with unit camera-z
  int part;
  Eigen::Vector3d normal;
};

/// Closed-form ray/shape intersection (nearest hit with t > 0).
std::optional<SurfaceHit> intersect(const SyntheticSpec& spec, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& direction);

/// Per-part surface area in m^2 (one side for the plate).
std::vector<double> part_areas(const SyntheticSpec& spec);
/// sum over parts of value * thickness * area.
double analytic_mass(const SyntheticSpec& spec);

struct GroundTruthPoint {
  Eigen::Vector3d xyz;
  std::string material;
  double value;
};

struct GroundTruth {
  double mass_kg = 0.0;
  std::vector<GroundTruthPoint> per_point;
};

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct RenderedScene {
  SceneBundle bundle;
  /// Per-frame part index per pixel; kBackground where the ray misses.
  std::vector<Raster<std::uint8_t>> material_ids;
  /// Unrounded z-depth per frame (infinity on misses).
  std::vector<std::vector<double>> exact_depth;
  GroundTruth ground_truth;

  static constexpr std::uint8_t kBackground = 255;
};

std::vector<Camera> orbit_cameras(const SyntheticSpec& spec);
RenderedScene render_scene(const SyntheticSpec& spec);
/// Renders through the given cameras instead of the spec's orbit.
RenderedScene render_scene(const SyntheticSpec& spec, const std::vector<Camera>& cameras);

/// Writes the bundle (manifest, PNGs, depth), ground_truth.json,
/// synthetic.json and per-frame material-ID rasters (frame_XXX_matid.u8).
RenderedScene generate_scene(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Deterministic stand-in for the vision-language and language models over a
/// synthetic scene. Each material owns a basis direction: patch embeddings are
/// the basis vector of the center pixel's material plus seeded noise of norm
/// `noise`, text embeddings are the clean basis vectors.
class MockModelProvider : public PatchEmbeddingProvider,
                          public TextEmbeddingProvider,
                          public CaptionProvider,
                          public CompletionProvider {
 public:
  MockModelProvider(SyntheticSpec spec, std::vector<Raster<std::uint8_t>> material_ids, double noise = 0.0,
                    std::uint64_t seed = 0, std::size_t dim = 16);

  /// Loads synthetic.json and the material-ID rasters from a generated scene.
  static MockModelProvider from_scene_dir(const std::filesystem::path& dir, double noise = 0.0,
                                          std::uint64_t seed = 0, std::size_t dim = 16);

  std::vector<Embedding> embed_patches(const Frame& frame, std::size_t frame_index,
                                       std::span<const PixelCenter> centers, int patch_size) override;
  std::vector<Embedding> embed_text(std::span<const std::string> texts) override;
  std::string caption(const Frame& frame, std::size_t frame_index, const std::string& prompt) override;
  std::string complete(const std::string& system, const std::string& user) override;

  std::size_t dim() const { return dim_; }
  /// Basis index used for a material name, if known.
  std::optional<std::size_t> basis_of(std::string_view name) const;

 private:
  struct Material {
    std::string name;
    /// Indexed by PropertyKind.
    std::array<double, 6> values;
    double thickness_cm;
  };

  SyntheticSpec spec_;
  std::vector<Raster<std::uint8_t>> material_ids_;
  double noise_;
  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<Material> materials_;  // scene parts first, then distractors
};

}  // namespace propfield
