#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "propfield/pointcloud.hpp"
#include "propfield/providers.hpp"
#include "propfield/scene_io.hpp"

namespace propfield {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Source points carrying unit-norm fused features (one row per point).
struct FeaturePointCloud {
  SourcePointCloud points;
  FeatureMatrix features;
  std::vector<std::uint32_t> visibility;
  /// Input indices of points seen by no frame (dropped).
  std::vector<std::size_t> dropped;

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

struct FusionConfig {
  int patch_size = 56;
  double occlusion_threshold = 0.01;
  /// 0 accepts whatever dimension the provider returns.
  std::size_t feature_dim = 0;

  /// Patch size rounded up to the next odd value so it centers on a pixel.
  int effective_patch_size() const { return patch_size % 2 == 0 ? patch_size + 1 : patch_size; }
  void validate() const;
};

struct PatchWindow {
  int x0, y0, x1, y1;  // half-open [x0,x1) x [y0,y1)
};

/// P x P window centered on (x,y), clamped to the image.
PatchWindow patch_window(int x, int y, int patch_size, int width, int height);

/// In-bounds, valid depth, inside the mask at the center pixel, and
/// point depth <= map depth + threshold.
bool visibility_test(const Eigen::Vector3d& point, const Frame& frame, double threshold);

/// Visibility-aware average of L2-normalized patch embeddings, renormalized.
/// Frames are reduced in ascending index order.
FeaturePointCloud fuse_features(const SourcePointCloud& points, const SceneBundle& bundle,
                                PatchEmbeddingProvider& provider, const FusionConfig& cfg);

/// Ablation: a single embedding of the whole canonical frame shared by every point.
FeaturePointCloud fuse_uniform_feature(const SourcePointCloud& points, const SceneBundle& bundle,
                                       std::size_t canonical_frame, PatchEmbeddingProvider& provider);

/// Coordinates of the centered features along their top three principal
/// axes (N x 3). Missing axes (rank < 3) are zero columns. Each axis is
/// signed so its largest-magnitude loading is positive.
Eigen::MatrixX3d pca_project(const FeatureMatrix& features);

/// Per-axis min-max scaling of pca_project to [0,255].
std::vector<std::array<std::uint8_t, 3>> pca_colorize(const FeatureMatrix& features);

}  // namespace propfield
