#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace propfield {

struct InstanceMetrics {
  double ade = 0.0;   // |m - m_hat|
  double alde = 0.0;  // |ln m - ln m_hat|
  double ape = 0.0;   // |m - m_hat| / m
  double mnre = 1.0;  // min(m / m_hat, m_hat / m)
};

/// Throws Error(InvalidArgument) for non-positive inputs.
InstanceMetrics compute_metrics(double pred, double gt);

/// Fraction of ground-truth-ordered pairs whose predicted order agrees.
/// Ground-truth ties are skipped; predicted ties count as wrong.
double pairwise_relationship_accuracy(std::span<const double> preds, std::span<const double> gts);

struct PredictionRow {
  std::string scene;
  double pred = 0.0;
  double gt = 0.0;
};

struct MetricsReport {
  std::vector<PredictionRow> rows;
  std::vector<InstanceMetrics> per_instance;
  InstanceMetrics mean;
  std::optional<double> pra;
  std::size_t n = 0;

  /// Tab-separated: one line per instance, then a "mean" line; PRA trails.
  std::string to_table() const;
  nlohmann::json to_json() const;
};

MetricsReport aggregate_report(const std::vector<PredictionRow>& rows);

}  // namespace propfield
