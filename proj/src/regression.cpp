#include "propfield/regression.hpp"

#include <algorithm>
#include <cmath>

#include "propfield/error.hpp"

namespace propfield {

void KernelConfig::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be > 0");
}

Eigen::VectorXd similarity_weights(const Eigen::Ref<const Eigen::VectorXd>& feature,
                                   const Eigen::Ref<const Eigen::MatrixXd>& text_embeddings) {
  if (feature.size() != text_embeddings.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "feature has dimension " + std::to_string(feature.size()) +
                                                  ", text embeddings have " + std::to_string(text_embeddings.cols()));
  }
  if (!(feature.squaredNorm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero-length feature vector");
  for (Eigen::Index k = 0; k < text_embeddings.rows(); ++k) {
    if (!(text_embeddings.row(k).squaredNorm() > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "zero-length text embedding");
    }
  }
  return (text_embeddings * feature).cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd softmax_weights(const Eigen::Ref<const Eigen::VectorXd>& weights, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  if (weights.size() == 0) throw Error(ErrorKind::InvalidArgument, "no materials to weight");
  const double top = weights.maxCoeff();
  Eigen::VectorXd e = ((weights.array() - top) / temperature).exp();
  return e / e.sum();
}

double kernel_regress(const Eigen::Ref<const Eigen::VectorXd>& weights, std::span<const double> values,
                      double temperature) {
  if (static_cast<std::size_t>(weights.size()) != values.size()) {
    throw Error(ErrorKind::DimensionMismatch, "weights and values differ in length");
  }
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "no materials to regress over");
  const double top = weights.maxCoeff();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double e = std::exp((weights[static_cast<Eigen::Index>(k)] - top) / temperature);
    num += e * values[k];
    den += e;
  }
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  return std::clamp(num / den, lo, hi);
}

std::size_t segment_material(const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() == 0) throw Error(ErrorKind::InvalidArgument, "no materials to segment");
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < weights.size(); ++k) {
    if (weights[k] > weights[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(k);
  }
  return best;
}

Eigen::VectorXd PropertyField::mixing(std::size_t i) const {
  const Eigen::VectorXd w = weights.row(static_cast<Eigen::Index>(i)).transpose();
  if (retrieval) {
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(w.size());
    onehot[static_cast<Eigen::Index>(segment_material(w))] = 1.0;
    return onehot;
  }
  return softmax_weights(w, temperature);
}

std::size_t PropertyField::nearest(const Eigen::Vector3d& x) const {
  if (index.empty()) throw Error(ErrorKind::EmptyInput, "property field is empty");
  return index.nearest(x).index;
}

Eigen::MatrixXd embed_material_names(const MaterialDictionary& dictionary, TextEmbeddingProvider& provider,
                                     const KernelConfig& cfg) {
  std::vector<std::string> prompts;
  for (const auto& e : dictionary.entries) {
    std::string p = cfg.text_prompt_template;
    const auto pos = p.find("{name}");
    if (pos != std::string::npos) p.replace(pos, 6, e.name);
    prompts.push_back(std::move(p));
  }
  std::vector<Embedding> vectors;
  try {
    vectors = provider.embed_text(prompts);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("text embedding failed: ") + e.what());
  }
  if (vectors.size() != prompts.size() || vectors.empty()) {
    throw Error(ErrorKind::Provider, "text provider returned the wrong number of vectors");
  }
  const std::size_t dim = vectors.front().size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != dim) throw Error(ErrorKind::DimensionMismatch, "text embeddings differ in dimension");
    for (std::size_t d = 0; d < dim; ++d) out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = vectors[k][d];
    const double norm = out.row(static_cast<Eigen::Index>(k)).norm();
    if (!(norm > 0.0)) throw Error(ErrorKind::Provider, "zero text embedding for " + dictionary.entries[k].name);
    out.row(static_cast<Eigen::Index>(k)) /= norm;
  }
  return out;
}

PropertyField build_field(const FeaturePointCloud& cloud, const MaterialDictionary& dictionary,
                          TextEmbeddingProvider& text_provider, const KernelConfig& cfg) {
  return build_field(cloud, dictionary, embed_material_names(dictionary, text_provider, cfg), cfg);
}

PropertyField build_field(const FeaturePointCloud& cloud, const MaterialDictionary& dictionary,
                          const Eigen::MatrixXd& text_embeddings, const KernelConfig& cfg) {
  cfg.validate();
  if (dictionary.entries.empty()) throw Error(ErrorKind::InvalidArgument, "material dictionary is empty");
  if (static_cast<std::size_t>(text_embeddings.rows()) != dictionary.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one text embedding per material is required");
  }
  if (cloud.size() == 0) throw Error(ErrorKind::EmptyInput, "feature point cloud is empty");

  PropertyField field;
  field.source_points = cloud.points;
  field.temperature = cfg.temperature;
  field.retrieval = cfg.retrieval;
  field.kind = dictionary.property_kind;
  field.units = dictionary.units;
  for (const auto& e : dictionary.entries) field.material_values.push_back(e.value.midpoint());

  const std::size_t n = cloud.size();
  field.weights.resize(static_cast<Eigen::Index>(n), text_embeddings.rows());
  field.values.resize(n);
  field.material.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd w = similarity_weights(cloud.features.row(static_cast<Eigen::Index>(i)).transpose(),
                                                 text_embeddings);
    field.weights.row(static_cast<Eigen::Index>(i)) = w.transpose();
    const std::size_t m = segment_material(w);
    field.material[i] = static_cast<std::uint32_t>(m);
    field.values[i] = cfg.retrieval ? field.material_values[m]
                                    : kernel_regress(w, field.material_values, cfg.temperature);
  }
  field.index = KdTree(field.source_points.points);
  return field;
}

double query_field(const PropertyField& field, const Eigen::Vector3d& x) {
  return field.values[field.nearest(x)];
}

}  // namespace propfield
