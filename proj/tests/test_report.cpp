#include <doctest.h>

#include "myolo/metrics.hpp"
#include "myolo/report.hpp"
#include "myolo/rng.hpp"

using namespace myolo;

namespace {

BinaryMask block(std::size_t n, std::size_t size) {
  BinaryMask m(n, n);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) m.set(y, x, true);
  return m;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("aggregates are means over sorted ids") {
    const MetricConfig cfg;
    Rng rng(1);
    std::vector<ImageRecord> records;
    const char* ids[3] = {"c", "a", "b"};
    std::vector<double> mae, f, e, s;
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> v(144);
      for (double& x : v) x = rng.uniform();
      const PredictionMap pred(12, 12, v);
      const BinaryMask gt = block(12, 4 + 2 * i);
      records.push_back(evaluate_image(ids[i], pred, gt, cfg));
      mae.push_back(metrics::mae(pred, gt));
      f.push_back(*metrics::f_beta(pred, gt));
      e.push_back(metrics::e_measure(pred.binarize(metrics::adaptive_threshold(pred)), gt));
      s.push_back(metrics::s_measure(pred, gt));
    }
    const MetricReport r = build_report(records, cfg);
    REQUIRE(r.images.size() == 3);
    CHECK(r.images[0].id == "a");
    CHECK(r.images[2].id == "c");
    auto mean = [](const std::vector<double>& v) { return (v[1] + v[2] + v[0]) / 3.0; };
    CHECK(r.aggregate.mae == doctest::Approx(mean(mae)).epsilon(1e-14));
    CHECK(*r.aggregate.f_beta == doctest::Approx(mean(f)).epsilon(1e-14));
    CHECK(r.aggregate.e_measure == doctest::Approx(mean(e)).epsilon(1e-14));
    CHECK(r.aggregate.s_measure == doctest::Approx(mean(s)).epsilon(1e-14));
    CHECK(r.undefined_f_beta == 0);
  }

  TEST_CASE("undefined F-beta is excluded and counted") {
    const MetricConfig cfg;
    std::vector<ImageRecord> records;
    records.push_back(evaluate_image("empty", PredictionMap(8, 8, 0.1), BinaryMask(8, 8), cfg));
    const BinaryMask gt = block(8, 4);
    records.push_back(evaluate_image("full", PredictionMap::from_mask(gt), gt, cfg));
    const MetricReport r = build_report(records, cfg);
    CHECK(r.undefined_f_beta == 1);
    CHECK(r.aggregate.f_beta_count == 1);
    CHECK(*r.aggregate.f_beta == doctest::Approx(1.0));
    CHECK(r.aggregate.count == 2);
    const auto j = r.to_json();
    CHECK(j["images"][0]["id"] == "empty");
    CHECK(j["images"][0]["f_beta"].is_null());
    CHECK(j["config"]["threshold"] == "adaptive");
    CHECK(j["config"]["beta2"] == 0.3);
    CHECK(j["undefined_f_beta"] == 1);
  }

  TEST_CASE("input order does not change the report") {
    const MetricConfig cfg{0.3, 0.5, 0.5};
    Rng rng(2);
    std::vector<ImageRecord> records;
    for (int i = 0; i < 6; ++i) {
      std::vector<double> v(256);
      for (double& x : v) x = rng.uniform();
      records.push_back(evaluate_image("img" + std::to_string(i), PredictionMap(16, 16, v), block(16, 3 + i), cfg));
    }
    auto reversed = records;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(build_report(records, cfg).to_json().dump() == build_report(reversed, cfg).to_json().dump());
    CHECK(build_report(records, cfg).to_json()["config"]["threshold"] == 0.5);
  }
}
