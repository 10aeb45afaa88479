#include "myolo/report.hpp"

#include <algorithm>

namespace myolo {

ImageRecord evaluate_image(std::string id, const PredictionMap& pred,
                           const BinaryMask& gt, const MetricConfig& config) {
  ImageRecord r;
  r.id = std::move(id);
  r.mae = metrics::mae(pred, gt);
  r.f_beta = metrics::f_beta(pred, gt, {config.beta2, config.threshold});
  const double thr = config.threshold.value_or(metrics::adaptive_threshold(pred));
  r.e_measure = metrics::e_measure(pred.binarize(thr), gt);
  r.s_measure = metrics::s_measure(pred, gt, config.alpha);
  return r;
}

MetricReport build_report(std::vector<ImageRecord> records,
                          const MetricConfig& config) {
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  MetricReport report;
  report.config = config;
  MetricAggregate& agg = report.aggregate;
  double f_sum = 0.0;
  for (const ImageRecord& r : records) {
    agg.mae += r.mae;
    agg.e_measure += r.e_measure;
    agg.s_measure += r.s_measure;
    if (r.f_beta) {
      f_sum += *r.f_beta;
      ++agg.f_beta_count;
    } else {
      ++report.undefined_f_beta;
    }
  }
  agg.count = records.size();
  if (agg.count > 0) {
    const auto n = static_cast<double>(agg.count);
    agg.mae /= n;
    agg.e_measure /= n;
    agg.s_measure /= n;
  }
  if (agg.f_beta_count > 0) agg.f_beta = f_sum / static_cast<double>(agg.f_beta_count);
  report.images = std::move(records);
  return report;
}

nlohmann::ordered_json MetricReport::to_json() const {
  using json = nlohmann::ordered_json;
  auto optional = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json j;
  j["config"] = {
      {"beta2", config.beta2},
      {"threshold", config.threshold ? json(*config.threshold) : json("adaptive")},
      {"alpha", config.alpha},
      {"e_measure_eps", metrics::kEnhancedEps},
  };
  json images = json::array();
  for (const ImageRecord& r : this->images) {
    images.push_back({{"id", r.id},
                      {"mae", r.mae},
                      {"f_beta", optional(r.f_beta)},
                      {"e_measure", r.e_measure},
                      {"s_measure", r.s_measure}});
  }
  j["images"] = std::move(images);
  j["aggregate"] = {{"count", aggregate.count},
                    {"mae", aggregate.mae},
                    {"f_beta", optional(aggregate.f_beta)},
                    {"f_beta_count", aggregate.f_beta_count},
                    {"e_measure", aggregate.e_measure},
                    {"s_measure", aggregate.s_measure}};
  j["undefined_f_beta"] = undefined_f_beta;
  return j;
}

}  // namespace myolo
