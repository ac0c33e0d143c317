#include "propfield/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "propfield/error.hpp"

namespace propfield {

void FusionConfig::validate() const {
  if (patch_size < 1) throw Error(ErrorKind::Config, "patch_size must be >= 1");
  if (!(occlusion_threshold > 0.0)) throw Error(ErrorKind::Config, "occlusion_threshold must be > 0");
}

PatchWindow patch_window(int x, int y, int patch_size, int width, int height) {
  const int half = patch_size / 2;
  return {std::max(0, x - half), std::max(0, y - half), std::min(width, x + half + 1),
          std::min(height, y + half + 1)};
}

namespace {

struct Hit {
  int x;
  int y;
};

std::optional<Hit> visible_pixel(const Eigen::Vector3d& point, const Frame& frame, double threshold) {
  const auto proj = project_point(frame.camera, point);
  if (!proj) return std::nullopt;
  const double fx = std::floor(proj->u);
  const double fy = std::floor(proj->v);
  if (!(fx >= 0.0 && fy >= 0.0 && fx < frame.camera.width && fy < frame.camera.height)) return std::nullopt;
  const int x = static_cast<int>(fx);
  const int y = static_cast<int>(fy);
  if (!frame.has_valid_depth(x, y) || !frame.in_mask(x, y)) return std::nullopt;
  if (!(proj->depth <= frame.depth_at(x, y) + threshold)) return std::nullopt;
  return Hit{x, y};
}

Eigen::VectorXd normalized(const Embedding& e, std::size_t frame, std::size_t point) {
  Eigen::VectorXd v(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) v[i] = e[i];
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    std::ostringstream msg;
    msg << "provider returned a zero or non-finite embedding (frame " << frame << ", point " << point << ")";
    throw Error(ErrorKind::Provider, msg.str());
  }
  return v / norm;
}

}  // namespace

bool visibility_test(const Eigen::Vector3d& point, const Frame& frame, double threshold) {
  return visible_pixel(point, frame, threshold).has_value();
}

FeaturePointCloud fuse_features(const SourcePointCloud& points, const SceneBundle& bundle,
                                PatchEmbeddingProvider& provider, const FusionConfig& cfg) {
  cfg.validate();
  const int patch = cfg.effective_patch_size();
  std::size_t dim = cfg.feature_dim;
  FeatureMatrix sums;
  std::vector<std::uint32_t> counts(points.size(), 0);

  std::vector<std::size_t> visible;
  std::vector<PixelCenter> centers;
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    const Frame& frame = bundle.frames[f];
    visible.clear();
    centers.clear();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (auto hit = visible_pixel(points.points[i], frame, cfg.occlusion_threshold)) {
        visible.push_back(i);
        centers.push_back({hit->x, hit->y});
      }
    }
    if (visible.empty()) continue;

    std::vector<Embedding> vectors;
    try {
      vectors = provider.embed_patches(frame, f, centers, patch);
    } catch (const Error& e) {
      throw Error(e.kind(), "patch embedding failed for frame " + std::to_string(f) + ": " + e.what());
    }
    if (vectors.size() != visible.size()) {
      throw Error(ErrorKind::Provider, "provider returned " + std::to_string(vectors.size()) + " vectors for " +
                                           std::to_string(visible.size()) + " patches in frame " + std::to_string(f));
    }
    for (std::size_t j = 0; j < visible.size(); ++j) {
      if (dim == 0) dim = vectors[j].size();
      if (vectors[j].size() != dim) {
        throw Error(ErrorKind::DimensionMismatch,
                    "embedding dimension " + std::to_string(vectors[j].size()) + " != " + std::to_string(dim) +
                        " (frame " + std::to_string(f) + ", point " + std::to_string(visible[j]) + ")");
      }
      if (sums.size() == 0) sums = FeatureMatrix::Zero(static_cast<Eigen::Index>(points.size()), dim);
      sums.row(visible[j]) += normalized(vectors[j], f, visible[j]).transpose();
      ++counts[visible[j]];
    }
  }

  FeaturePointCloud out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (counts[i] > 0 && sums.row(i).norm() > 0.0) {
      kept.push_back(i);
    } else {
      out.dropped.push_back(i);
    }
  }
  if (kept.empty()) throw Error(ErrorKind::EmptyFusion, "no source point is visible in any frame");

  out.features.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const std::size_t i = kept[r];
    const Eigen::RowVectorXd mean = sums.row(i) / static_cast<double>(counts[i]);
    out.features.row(r) = mean / mean.norm();
    out.points.push_back(points.points[i], points.origin_frame.empty() ? 0 : points.origin_frame[i]);
    out.visibility.push_back(counts[i]);
  }
  return out;
}

FeaturePointCloud fuse_uniform_feature(const SourcePointCloud& points, const SceneBundle& bundle,
                                       std::size_t canonical_frame, PatchEmbeddingProvider& provider) {
  if (points.empty()) throw Error(ErrorKind::EmptyFusion, "no source points to fuse");
  if (canonical_frame >= bundle.frames.size()) throw Error(ErrorKind::InvalidArgument, "canonical frame out of range");
  const Frame& frame = bundle.frames[canonical_frame];
  const int w = frame.camera.width;
  const int h = frame.camera.height;
  int patch = std::max(w, h);
  if (patch % 2 == 0) ++patch;
  const PixelCenter center{w / 2, h / 2};
  const auto vectors = provider.embed_patches(frame, canonical_frame, std::span(&center, 1), patch);
  if (vectors.size() != 1) throw Error(ErrorKind::Provider, "expected one global embedding");
  const Eigen::VectorXd global = normalized(vectors.front(), canonical_frame, 0);

  FeaturePointCloud out;
  out.points = points;
  out.features = global.transpose().replicate(static_cast<Eigen::Index>(points.size()), 1);
  out.visibility.assign(points.size(), 1);
  return out;
}

Eigen::MatrixX3d pca_project(const FeatureMatrix& features) {
  if (features.rows() < 3) throw Error(ErrorKind::InvalidArgument, "PCA colorization needs at least 3 points");
  const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();

  Eigen::MatrixX3d out = Eigen::MatrixX3d::Zero(features.rows(), 3);
  // Rounding in the column means leaves ~1e-16 residue when all rows agree.
  const double floor_tol = 1e-10 * features.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(features.rows()));
  const double tol = sv.size() > 0 ? std::max(sv[0] * 1e-9, floor_tol) : 0.0;
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(3, sv.size()); ++c) {
    if (!(sv[c] > tol)) break;
    Eigen::VectorXd axis = v.col(c);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0.0) axis = -axis;
    out.col(c) = centered * axis;
  }
  return out;
}

std::vector<std::array<std::uint8_t, 3>> pca_colorize(const FeatureMatrix& features) {
  const Eigen::MatrixX3d proj = pca_project(features);
  std::vector<std::array<std::uint8_t, 3>> colors(static_cast<std::size_t>(proj.rows()), {0, 0, 0});
  for (int c = 0; c < 3; ++c) {
    const double lo = proj.col(c).minCoeff();
    const double hi = proj.col(c).maxCoeff();
    if (!(hi > lo)) continue;
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      const double t = (proj(i, c) - lo) / (hi - lo);
      colors[i][c] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
  }
  return colors;
}

}  // namespace propfield
