#include "propfield/pointcloud.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <unordered_set>

#include "propfield/error.hpp"
#include "propfield/kdtree.hpp"

namespace propfield {

Aabb Aabb::bounding(const std::vector<Eigen::Vector3d>& points) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "bounding box of an empty point set");
  Aabb box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

void SamplingConfig::validate() const {
  if (n_rays < 1) throw Error(ErrorKind::Config, "n_rays must be >= 1");
  if (!(voxel_grid > 0.0)) throw Error(ErrorKind::Config, "voxel_grid must be > 0");
  if (!(bbox.min.array() < bbox.max.array()).all()) {
    throw Error(ErrorKind::Config, "bbox min must be below max on every axis");
  }
  if (outlier_k < 1) throw Error(ErrorKind::Config, "outlier_k must be >= 1");
  if (!(outlier_sigma > 0.0)) throw Error(ErrorKind::Config, "outlier_sigma must be > 0");
}

SourcePointCloud sample_source_points(const SceneBundle& bundle, const SamplingConfig& cfg) {
  cfg.validate();

  std::vector<std::size_t> valid_per_frame(bundle.frames.size(), 0);
  std::size_t total = 0;
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    const Frame& frame = bundle.frames[f];
    for (int y = 0; y < frame.depth.height; ++y) {
      for (int x = 0; x < frame.depth.width; ++x) {
        valid_per_frame[f] += frame.has_valid_depth(x, y) && frame.in_mask(x, y);
      }
    }
    total += valid_per_frame[f];
  }
  if (total == 0) throw Error(ErrorKind::EmptyScene, "no valid depth pixels in any frame");

  // Floyd's algorithm: n distinct draws from [0, total).
  std::vector<std::size_t> picks;
  if (cfg.n_rays >= total) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(cfg.n_rays * 2);
    for (std::size_t j = total - cfg.n_rays; j < total; ++j) {
      std::uniform_int_distribution<std::size_t> dist(0, j);
      const std::size_t t = dist(rng);
      chosen.insert(chosen.contains(t) ? j : t);
    }
    picks.assign(chosen.begin(), chosen.end());
    std::sort(picks.begin(), picks.end());
  }

  SourcePointCloud out;
  out.points.reserve(picks.size());
  out.origin_frame.reserve(picks.size());
  std::size_t next = 0;
  std::size_t counter = 0;
  for (std::size_t f = 0; f < bundle.frames.size() && next < picks.size(); ++f) {
    if (counter + valid_per_frame[f] <= picks[next]) {
      counter += valid_per_frame[f];
      continue;
    }
    const Frame& frame = bundle.frames[f];
    for (int y = 0; y < frame.depth.height && next < picks.size(); ++y) {
      for (int x = 0; x < frame.depth.width && next < picks.size(); ++x) {
        if (!(frame.has_valid_depth(x, y) && frame.in_mask(x, y))) continue;
        if (counter == picks[next]) {
          const Eigen::Vector3d p = backproject(frame.camera, x + 0.5, y + 0.5, frame.depth_at(x, y));
          if (p.allFinite() && cfg.bbox.contains(p)) out.push_back(p, static_cast<std::uint32_t>(f));
          ++next;
        }
        ++counter;
      }
    }
  }
  return out;
}

SourcePointCloud voxel_downsample(const SourcePointCloud& cloud, double grid) {
  if (!(grid > 0.0)) throw Error(ErrorKind::InvalidArgument, "voxel grid must be > 0");
  struct Cell {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::size_t count = 0;
    std::uint32_t frame = 0;
  };
  std::map<std::array<std::int64_t, 3>, Cell> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() / grid)),
                                          static_cast<std::int64_t>(std::floor(p.y() / grid)),
                                          static_cast<std::int64_t>(std::floor(p.z() / grid))};
    Cell& cell = cells[key];
    if (cell.count == 0) cell.frame = cloud.origin_frame.empty() ? 0 : cloud.origin_frame[i];
    cell.sum += p;
    ++cell.count;
  }
  SourcePointCloud out;
  out.points.reserve(cells.size());
  out.origin_frame.reserve(cells.size());
  for (const auto& [key, cell] : cells) {
    out.push_back(cell.sum / static_cast<double>(cell.count), cell.frame);
  }
  return out;
}

std::vector<double> mean_neighbor_distances(const SourcePointCloud& cloud, std::size_t k) {
  const KdTree tree(cloud.points);
  std::vector<double> means(cloud.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = tree.knn(cloud.points[i], k, i);
    double sum = 0.0;
    for (const auto& n : nbrs) sum += std::sqrt(n.squared_distance);
    means[i] = sum / static_cast<double>(nbrs.size());
  }
  return means;
}

SourcePointCloud remove_outliers(const SourcePointCloud& cloud, std::size_t k, double sigma) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "outlier k must be >= 1");
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "outlier sigma must be > 0");
  if (cloud.size() <= k) return cloud;

  const std::vector<double> means = mean_neighbor_distances(cloud, k);
  const double n = static_cast<double>(means.size());
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= n;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  const double threshold = mean + sigma * std::sqrt(var / n);

  SourcePointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (means[i] <= threshold) {
      out.push_back(cloud.points[i], cloud.origin_frame.empty() ? 0 : cloud.origin_frame[i]);
    }
  }
  return out;
}

ExtractedPoints extract_source_points(const SceneBundle& bundle, const SamplingConfig& cfg) {
  ExtractedPoints out;
  out.surface = remove_outliers(sample_source_points(bundle, cfg), cfg.outlier_k, cfg.outlier_sigma);
  if (out.surface.empty()) throw Error(ErrorKind::EmptyScene, "no points left inside the bounding box");
  out.source = voxel_downsample(out.surface, cfg.voxel_grid);
  return out;
}

void write_points_f32(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& points) {
  std::vector<float> buf;
  buf.reserve(points.size() * 3);
  for (const auto& p : points) {
    buf.push_back(static_cast<float>(p.x()));
    buf.push_back(static_cast<float>(p.y()));
    buf.push_back(static_cast<float>(p.z()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<Eigen::Vector3d> read_points_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "cannot read " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % (3 * sizeof(float)) != 0) {
    throw Error(ErrorKind::UnreadableFile, path.string() + " is not a float32 xyz stream");
  }
  std::vector<float> buf(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  std::vector<Eigen::Vector3d> points(buf.size() / 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = Eigen::Vector3d(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
  }
  return points;
}

}  // namespace propfield
