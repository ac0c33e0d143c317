#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace propfield {

/// Pinhole camera. cam_to_world maps camera coordinates (x right, y down,
/// z forward) to world coordinates. Pixel (0,0) is the top-left corner and
/// the center of pixel (i,j) sits at (i+0.5, j+0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix4d cam_to_world = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return cam_to_world.topLeftCorner<3, 3>(); }
  Eigen::Vector3d center() const { return cam_to_world.topRightCorner<3, 1>(); }

  // Throws Error(InvalidArgument / NonOrthonormalRotation).
  void validate() const;
};

struct Projection {
  double u;
  double v;
  double depth;
};

/// Returns nullopt when the point is on or behind the image plane.
std::optional<Projection> project_point(const Camera& camera, const Eigen::Vector3d& world);

/// Inverse of project_point for z-depth.
Eigen::Vector3d backproject(const Camera& camera, double u, double v, double depth);

template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

/// Interleaved 8-bit RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

struct Frame {
  Camera camera;
  RgbImage image;
  /// Raw depth as stored on disk (metric z-depth). Read through depth_at().
  Raster<float> depth;
  /// Binary object mask (1 = object), when the bundle provides one.
  std::optional<Raster<std::uint8_t>> mask;
  /// Multiplier applied to raw depth; tracks pose normalization.
  double depth_scale = 1.0;
  std::string image_path;

  bool has_valid_depth(int x, int y) const;
  double depth_at(int x, int y) const { return depth_scale * static_cast<double>(depth.at(x, y)); }
  bool in_mask(int x, int y) const { return !mask || mask->at(x, y) != 0; }
  std::size_t mask_area() const;
};

struct SceneBundle {
  std::string name;
  std::vector<Frame> frames;
  /// normalized = (metric - world_offset) * scene_scale
  double scene_scale = 1.0;
  Eigen::Vector3d world_offset = Eigen::Vector3d::Zero();

  bool has_masks() const;
  Eigen::Vector3d to_normalized(const Eigen::Vector3d& metric) const {
    return (metric - world_offset) * scene_scale;
  }
};

SceneBundle load_scene_bundle(const std::filesystem::path& dir);

/// Writes the bundle in the on-disk layout read by load_scene_bundle. Depth is
/// written raw (depth_scale is not applied), cameras as stored.
void save_scene_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

/// Centers the camera centers on their centroid and scales them uniformly
/// into [-1,1]^3. Throws Error(DegeneratePose) when all centers coincide.
SceneBundle normalize_poses(const SceneBundle& bundle);

// Raw little-endian float32 rasters.
Raster<float> read_depth_file(const std::filesystem::path& path, int width, int height);
void write_depth_file(const std::filesystem::path& path, const Raster<float>& depth);

}  // namespace propfield
