#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "myolo/image.hpp"
#include "myolo/metrics.hpp"

namespace myolo {

struct MetricConfig {
  double beta2 = metrics::kDefaultBeta2;
  std::optional<double> threshold;  // adaptive when unset
  double alpha = metrics::kDefaultAlpha;
};

struct ImageRecord {
  std::string id;
  double mae = 0.0;
  std::optional<double> f_beta;  // undefined for an all-background mask
  double e_measure = 0.0;
  double s_measure = 0.0;
};

struct MetricAggregate {
  std::size_t count = 0;
  double mae = 0.0;
  std::optional<double> f_beta;
  std::size_t f_beta_count = 0;
  double e_measure = 0.0;
  double s_measure = 0.0;
};

struct MetricReport {
  MetricConfig config;
  std::vector<ImageRecord> images;  // sorted by id
  MetricAggregate aggregate;
  std::size_t undefined_f_beta = 0;

  nlohmann::ordered_json to_json() const;
};

/// All four scores for one image. E-measure sees the prediction binarised at
/// the same threshold F-beta uses.
ImageRecord evaluate_image(std::string id, const PredictionMap& pred,
                           const BinaryMask& gt, const MetricConfig& config = {});

/// Sorts by id, then averages in that order.
MetricReport build_report(std::vector<ImageRecord> records,
                          const MetricConfig& config = {});

}  // namespace myolo
