#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "propfield/scene_io.hpp"

namespace propfield {

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-0.5);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(0.5);

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Aabb padded(double margin) const {
    return {min - Eigen::Vector3d::Constant(margin), max + Eigen::Vector3d::Constant(margin)};
  }

  /// 1x1x1 box centered at the origin (object-centric captures).
  static Aabb unit_box() { return {}; }
  /// 1.5^3 box centered at (0,0,-0.75) (tabletop captures).
  static Aabb tabletop_box() {
    return {Eigen::Vector3d(-0.75, -0.75, -1.5), Eigen::Vector3d(0.75, 0.75, 0.0)};
  }
  static Aabb bounding(const std::vector<Eigen::Vector3d>& points);
};

struct SourcePointCloud {
  std::vector<Eigen::Vector3d> points;
  /// Frame each point was sampled from.
  std::vector<std::uint32_t> origin_frame;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void push_back(const Eigen::Vector3d& p, std::uint32_t frame) {
    points.push_back(p);
    origin_frame.push_back(frame);
  }
};

struct SamplingConfig {
  std::size_t n_rays = 100000;
  double voxel_grid = 0.01;
  Aabb bbox = Aabb::unit_box();
  std::size_t outlier_k = 20;
  double outlier_sigma = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Draws min(n_rays, #valid) distinct valid (and masked) pixels pooled over
/// all frames, back-projects them through their depth and keeps those
/// inside cfg.bbox. Output order follows (frame, row, column).
SourcePointCloud sample_source_points(const SceneBundle& bundle, const SamplingConfig& cfg);

/// One centroid per occupied voxel floor(p / grid), ordered by ascending
/// (x, y, z) voxel key. origin_frame comes from the voxel's first member.
SourcePointCloud voxel_downsample(const SourcePointCloud& cloud, double grid);

/// Drops points whose mean distance to their k nearest neighbors exceeds
/// mean + sigma * std of that statistic over the cloud.
SourcePointCloud remove_outliers(const SourcePointCloud& cloud, std::size_t k, double sigma);

/// Per-point mean distance to the k nearest other points.
std::vector<double> mean_neighbor_distances(const SourcePointCloud& cloud, std::size_t k);

struct ExtractedPoints {
  /// Dense outlier-filtered surface samples (used for cuboid placement).
  SourcePointCloud surface;
  /// Voxel-downsampled source points.
  SourcePointCloud source;
};

/// sample -> bbox -> outlier removal -> voxel downsample.
ExtractedPoints extract_source_points(const SceneBundle& bundle, const SamplingConfig& cfg);

// Raw float32 xyz triple stream plus a parallel uint32 origin-frame stream.
void write_points_f32(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& points);
std::vector<Eigen::Vector3d> read_points_f32(const std::filesystem::path& path);

}  // namespace propfield
