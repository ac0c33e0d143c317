#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "propfield/fusion.hpp"
#include "propfield/kdtree.hpp"
#include "propfield/materials.hpp"
#include "propfield/providers.hpp"

namespace propfield {

struct KernelConfig {
  double temperature = 0.1;
  /// "{name}" is replaced by the material name before text embedding.
  std::string text_prompt_template = "{name}";
  /// T -> 0 limit: each point takes its argmax material's value.
  bool retrieval = false;

  void validate() const;
};

/// Cosine similarities between a unit feature and K unit text embeddings
/// (rows of text_embeddings), clamped to [-1, 1].
Eigen::VectorXd similarity_weights(const Eigen::Ref<const Eigen::VectorXd>& feature,
                                   const Eigen::Ref<const Eigen::MatrixXd>& text_embeddings);

/// Temperature-softmax weights exp(w/T) / sum exp(w/T), max-shifted.
Eigen::VectorXd softmax_weights(const Eigen::Ref<const Eigen::VectorXd>& weights, double temperature);

/// sum_k exp(w_k/T) y_k / sum_k exp(w_k/T).
double kernel_regress(const Eigen::Ref<const Eigen::VectorXd>& weights, std::span<const double> values,
                      double temperature);

/// Argmax of the weights; ties go to the lowest index.
std::size_t segment_material(const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Per-point property values over the source points, queryable anywhere via
/// nearest-neighbor interpolation.
struct PropertyField {
  SourcePointCloud source_points;
  std::vector<double> values;
  std::vector<std::uint32_t> material;
  /// N x K cosine similarities.
  Eigen::MatrixXd weights;
  /// Midpoints used for the values.
  std::vector<double> material_values;
  double temperature = 0.1;
  bool retrieval = false;
  PropertyKind kind = PropertyKind::MassDensity;
  std::string units;
  KdTree index;

  std::size_t size() const { return values.size(); }
  /// Softmax (or one-hot in retrieval mode) mixing weights of point i.
  Eigen::VectorXd mixing(std::size_t i) const;
  std::size_t nearest(const Eigen::Vector3d& x) const;
};

/// Unit text embeddings (K x D) for the dictionary's material names.
Eigen::MatrixXd embed_material_names(const MaterialDictionary& dictionary, TextEmbeddingProvider& provider,
                                     const KernelConfig& cfg);

PropertyField build_field(const FeaturePointCloud& cloud, const MaterialDictionary& dictionary,
                          TextEmbeddingProvider& text_provider, const KernelConfig& cfg);

/// Same as build_field with precomputed text embeddings.
PropertyField build_field(const FeaturePointCloud& cloud, const MaterialDictionary& dictionary,
                          const Eigen::MatrixXd& text_embeddings, const KernelConfig& cfg);

/// Value of the nearest source point (lowest index on ties).
double query_field(const PropertyField& field, const Eigen::Vector3d& x);

}  // namespace propfield
