#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "propfield/materials.hpp"
#include "propfield/pointcloud.hpp"
#include "propfield/regression.hpp"
#include "propfield/scene_io.hpp"

namespace propfield {

struct MassConfig {
  /// Cuboid footprint d (normalized world units).
  double surface_grid = 0.005;
  double carve_grid = 0.002;
  double calibration = 0.6;
  bool clamp = true;

  void validate() const;
};

struct CarveResult {
  std::size_t occupied = 0;
  double voxel_edge = 0.0;
  /// occupied * edge^3, in normalized world units.
  double volume_bound = 0.0;
  Aabb bbox;
  /// Centers of voxels that survived carving.
  std::vector<Eigen::Vector3d> kept_centers;
};

/// A voxel is free when some frame sees it in-bounds on a valid (and masked)
/// pixel with voxel depth < map depth - grid. Survivors bound the volume.
CarveResult carve_volume(const SceneBundle& bundle, const Aabb& bbox, double grid);

/// Which end of each LLM-proposed range to integrate with.
enum class RangePoint { Low, Mid, High };

struct MassEstimate {
  double mass_kg = 0.0;
  /// Sum of cuboid volumes after clamping, in m^3.
  double volume_m3 = 0.0;
  double volume_bound_m3 = 0.0;
  bool clamped = false;
  std::size_t cuboids = 0;
};

/// Cuboid integration over surface cells of edge d:
///   m = c * sum_x d^2 * sum_k p_k(x) y_k t_k
/// where p(x) are the field's softmax weights at the nearest source point
/// and t_k are thicknesses converted from cm into normalized units. The
/// total volume sum_x d^2 * sum_k p_k t_k is rescaled uniformly down to
/// carve.volume_bound when cfg.clamp is set.
MassEstimate integrate_mass(const PropertyField& field, const MaterialDictionary& dictionary, const MassConfig& cfg,
                            const CarveResult& carve, double scene_scale, const SourcePointCloud& surface,
                            RangePoint point = RangePoint::Mid);

/// Ablation: fills every surviving carve voxel with the density of its
/// nearest source point.
MassEstimate integrate_mass_no_thickness(const PropertyField& field, const MassConfig& cfg, const CarveResult& carve,
                                         double scene_scale);

double clip_mass(double kg);

}  // namespace propfield
