#include "propfield/metrics.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "propfield/error.hpp"

namespace propfield {

InstanceMetrics compute_metrics(double pred, double gt) {
  if (!(pred > 0.0) || !(gt > 0.0) || !std::isfinite(pred) || !std::isfinite(gt)) {
    throw Error(ErrorKind::InvalidArgument, "metrics need positive finite prediction and ground truth");
  }
  InstanceMetrics m;
  m.ade = std::abs(gt - pred);
  m.alde = std::abs(std::log(gt) - std::log(pred));
  m.ape = m.ade / gt;
  m.mnre = std::min(gt / pred, pred / gt);
  return m;
}

double pairwise_relationship_accuracy(std::span<const double> preds, std::span<const double> gts) {
  if (preds.size() != gts.size()) throw Error(ErrorKind::DimensionMismatch, "predictions and ground truth differ in length");
  if (preds.size() < 2) throw Error(ErrorKind::InvalidArgument, "PRA needs at least two instances");
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = i + 1; j < preds.size(); ++j) {
      if (gts[i] == gts[j]) continue;
      ++total;
      if (preds[i] == preds[j]) continue;
      correct += (preds[i] < preds[j]) == (gts[i] < gts[j]);
    }
  }
  if (total == 0) throw Error(ErrorKind::InvalidArgument, "PRA has no pair with distinct ground truth");
  return static_cast<double>(correct) / static_cast<double>(total);
}

MetricsReport aggregate_report(const std::vector<PredictionRow>& rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no prediction rows");
  MetricsReport report;
  report.rows = rows;
  report.n = rows.size();
  InstanceMetrics sum{0.0, 0.0, 0.0, 0.0};
  std::vector<double> preds;
  std::vector<double> gts;
  for (const auto& r : rows) {
    const auto m = compute_metrics(r.pred, r.gt);
    report.per_instance.push_back(m);
    sum.ade += m.ade;
    sum.alde += m.alde;
    sum.ape += m.ape;
    sum.mnre += m.mnre;
    preds.push_back(r.pred);
    gts.push_back(r.gt);
  }
  const double n = static_cast<double>(rows.size());
  report.mean = {sum.ade / n, sum.alde / n, sum.ape / n, sum.mnre / n};
  if (rows.size() >= 2) {
    bool distinct = false;
    for (double g : gts) distinct |= g != gts.front();
    if (distinct) report.pra = pairwise_relationship_accuracy(preds, gts);
  }
  return report;
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  out << "scene\tpred\tgt\tADE\tALDE\tAPE\tMnRE\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = per_instance[i];
    out << fmt::format("{}\t{:.6g}\t{:.6g}\t{:.3f}\t{:.3f}\t{:.3f}\t{:.3f}\n", rows[i].scene, rows[i].pred,
                       rows[i].gt, m.ade, m.alde, m.ape, m.mnre);
  }
  out << fmt::format("mean\t\t\t{:.3f}\t{:.3f}\t{:.3f}\t{:.3f}\n", mean.ade, mean.alde, mean.ape, mean.mnre);
  if (pra) out << fmt::format("PRA\t{:.3f}\n", *pra);
  return out.str();
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = per_instance[i];
    records.push_back({{"scene", rows[i].scene},
                       {"pred", rows[i].pred},
                       {"gt", rows[i].gt},
                       {"ade", m.ade},
                       {"alde", m.alde},
                       {"ape", m.ape},
                       {"mnre", m.mnre}});
  }
  nlohmann::json doc = {{"n", n},
                        {"records", records},
                        {"mean", {{"ade", mean.ade}, {"alde", mean.alde}, {"ape", mean.ape}, {"mnre", mean.mnre}}}};
  doc["pra"] = pra ? nlohmann::json(*pra) : nlohmann::json(nullptr);
  return doc;
}

}  // namespace propfield
