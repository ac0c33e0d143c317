#include "propfield/integration.hpp"

#include <algorithm>
#include <cmath>

#include "propfield/error.hpp"

namespace propfield {

void MassConfig::validate() const {
  if (!(surface_grid > 0.0) || !(carve_grid > 0.0)) throw Error(ErrorKind::Config, "mass grids must be > 0");
  if (!(calibration > 0.0)) throw Error(ErrorKind::Config, "calibration must be > 0");
}

CarveResult carve_volume(const SceneBundle& bundle, const Aabb& bbox, double grid) {
  if (!(grid > 0.0)) throw Error(ErrorKind::InvalidArgument, "carve grid must be > 0");
  const Eigen::Vector3d extent = bbox.max - bbox.min;
  if (!(extent.array() > 0.0).all()) throw Error(ErrorKind::InvalidArgument, "carve box is empty");
  const auto cells = [&](double e) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(e / grid - 1e-9))); };
  const std::size_t nx = cells(extent.x());
  const std::size_t ny = cells(extent.y());
  const std::size_t nz = cells(extent.z());

  std::vector<Eigen::Vector3d> alive;
  alive.reserve(nx * ny * nz);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t k = 0; k < nz; ++k) {
        alive.push_back(bbox.min + grid * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5));
      }
    }
  }

  for (const Frame& frame : bundle.frames) {
    const Eigen::Matrix3d rt = frame.camera.rotation().transpose();
    const Eigen::Vector3d center = frame.camera.center();
    const Camera& cam = frame.camera;
    std::size_t write = 0;
    for (std::size_t v = 0; v < alive.size(); ++v) {
      bool carved = false;
      const Eigen::Vector3d local = rt * (alive[v] - center);
      if (local.z() > 0.0) {
        const double u = std::floor(cam.fx * local.x() / local.z() + cam.cx);
        const double w = std::floor(cam.fy * local.y() / local.z() + cam.cy);
        if (u >= 0.0 && w >= 0.0 && u < cam.width && w < cam.height) {
          const int x = static_cast<int>(u);
          const int y = static_cast<int>(w);
          carved = frame.has_valid_depth(x, y) && frame.in_mask(x, y) && local.z() < frame.depth_at(x, y) - grid;
        }
      }
      if (!carved) alive[write++] = alive[v];
    }
    alive.resize(write);
  }

  CarveResult out;
  out.occupied = alive.size();
  out.voxel_edge = grid;
  out.volume_bound = static_cast<double>(alive.size()) * grid * grid * grid;
  out.bbox = bbox;
  out.kept_centers = std::move(alive);
  return out;
}

namespace {

double pick(const ValueRange& r, RangePoint p) {
  switch (p) {
    case RangePoint::Low: return r.low;
    case RangePoint::High: return r.high;
    case RangePoint::Mid: return r.midpoint();
  }
  return r.midpoint();
}

void check_scale(double scene_scale) {
  if (!(scene_scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "scene_scale must be > 0");
}

}  // namespace

MassEstimate integrate_mass(const PropertyField& field, const MaterialDictionary& dictionary, const MassConfig& cfg,
                            const CarveResult& carve, double scene_scale, const SourcePointCloud& surface,
                            RangePoint point) {
  cfg.validate();
  check_scale(scene_scale);
  if (field.kind != PropertyKind::MassDensity) {
    throw Error(ErrorKind::InvalidArgument, "mass integration needs a mass-density field");
  }
  if (dictionary.size() != static_cast<std::size_t>(field.weights.cols())) {
    throw Error(ErrorKind::DimensionMismatch, "dictionary does not match the field's materials");
  }
  std::vector<double> density;
  std::vector<double> thickness;  // normalized world units
  for (const auto& e : dictionary.entries) {
    if (!e.thickness_cm) throw Error(ErrorKind::MissingThickness, "material \"" + e.name + "\" has no thickness");
    density.push_back(pick(e.value, point));
    thickness.push_back(pick(*e.thickness_cm, point) * 0.01 * scene_scale);
  }

  const SourcePointCloud cells = voxel_downsample(surface, cfg.surface_grid);
  if (cells.empty()) throw Error(ErrorKind::EmptyInput, "no surface cells to integrate over");

  const double area = cfg.surface_grid * cfg.surface_grid;
  double mass = 0.0;    // kg/m^3 * normalized^3
  double volume = 0.0;  // normalized^3
  for (const auto& x : cells.points) {
    const Eigen::VectorXd p = field.mixing(field.nearest(x));
    double yt = 0.0;
    double t = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      yt += p[k] * density[static_cast<std::size_t>(k)] * thickness[static_cast<std::size_t>(k)];
      t += p[k] * thickness[static_cast<std::size_t>(k)];
    }
    mass += area * yt;
    volume += area * t;
  }

  MassEstimate out;
  out.cuboids = cells.size();
  if (cfg.clamp && volume > carve.volume_bound) {
    mass = volume > 0.0 ? mass * (carve.volume_bound / volume) : 0.0;
    volume = carve.volume_bound;
    out.clamped = true;
  }
  const double to_metric = 1.0 / (scene_scale * scene_scale * scene_scale);
  out.mass_kg = cfg.calibration * mass * to_metric;
  out.volume_m3 = volume * to_metric;
  out.volume_bound_m3 = carve.volume_bound * to_metric;
  return out;
}

MassEstimate integrate_mass_no_thickness(const PropertyField& field, const MassConfig& cfg, const CarveResult& carve,
                                         double scene_scale) {
  cfg.validate();
  check_scale(scene_scale);
  if (carve.kept_centers.empty()) throw Error(ErrorKind::EmptyInput, "carving left no occupied voxels");
  const double cell = carve.voxel_edge * carve.voxel_edge * carve.voxel_edge;
  double mass = 0.0;
  for (const auto& c : carve.kept_centers) mass += query_field(field, c) * cell;
  const double to_metric = 1.0 / (scene_scale * scene_scale * scene_scale);
  MassEstimate out;
  out.mass_kg = cfg.calibration * mass * to_metric;
  out.volume_m3 = carve.volume_bound * to_metric;
  out.volume_bound_m3 = out.volume_m3;
  out.cuboids = carve.kept_centers.size();
  return out;
}

double clip_mass(double kg) { return std::clamp(kg, 0.01, 100.0); }

}  // namespace propfield
