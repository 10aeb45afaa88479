#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "corpus.hpp"
#include "myolo/cli.hpp"
#include "myolo/fmap_io.hpp"
#include "myolo/image.hpp"
#include "myolo/metrics.hpp"
#include "oracles.hpp"

using namespace myolo;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "myolo");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("myolo_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

BinaryMask disc(std::size_t n, double cx, double cy, double r) {
  BinaryMask m(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) m.set(y, x, std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r);
  return m;
}

/// gt/ holds three discs; pred/ holds blurred-ish versions of them.
void write_eval_corpus(const fs::path& root) {
  fs::create_directories(root / "gt");
  fs::create_directories(root / "pred");
  Rng rng(5);
  for (int i = 0; i < 3; ++i) {
    const BinaryMask gt = disc(24, 10 + i, 12, 5 + i);
    pgm::write_mask(root / "gt" / ("img" + std::to_string(i) + ".pgm"), gt);
    std::vector<double> v(gt.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = gt[k] ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.4);
    pgm::write_prediction(root / "pred" / ("img" + std::to_string(i) + ".pgm"), PredictionMap(24, 24, v));
  }
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2, help with 0") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"eval"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
    CHECK(invoke({"similarity", "/nonexistent/dir"}).code == 2);
  }

  TEST_CASE("eval: predictions equal to ground truth") {
    const fs::path root = fresh("eval_perfect");
    write_eval_corpus(root);
    const auto r = invoke({"eval", (root / "gt").string(), (root / "gt").string()});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    CHECK(doc["aggregate"]["mae"] == 0.0);
    CHECK(doc["aggregate"]["f_beta"].get<double>() == doctest::Approx(1.0));
    CHECK(doc["aggregate"]["count"] == 3);
    CHECK(doc["warnings"]["count"] == 0);
    CHECK(doc["manifest"]["command"] == "eval");
    CHECK(doc["manifest"]["seed"] == 42);
  }

  TEST_CASE("eval: unmatched file is warned about and skipped") {
    const fs::path root = fresh("eval_unmatched");
    write_eval_corpus(root);
    fs::rename(root / "pred" / "img2.pgm", root / "pred" / "other.pgm");
    const auto r = invoke({"eval", (root / "pred").string(), (root / "gt").string(), "--out",
                        (root / "report.json").string()});
    REQUIRE(r.code == 0);
    const json doc = json::parse(slurp(root / "report.json"));
    CHECK(doc["aggregate"]["count"] == 2);
    // One stray prediction and the ground truth it fails to cover.
    CHECK(doc["warnings"]["count"] == 2);
    CHECK(r.err.find("other.pgm") != std::string::npos);
  }

  TEST_CASE("eval: aggregates equal hand-computed means") {
    const fs::path root = fresh("eval_means");
    write_eval_corpus(root);
    const auto r = invoke({"eval", (root / "pred").string(), (root / "gt").string()});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    double mae = 0, s = 0;
    for (int i = 0; i < 3; ++i) {
      const std::string name = "img" + std::to_string(i) + ".pgm";
      const auto pred = pgm::read_prediction(root / "pred" / name);
      const auto gt = pgm::read_mask(root / "gt" / name);
      mae += metrics::mae(pred, gt);
      s += metrics::s_measure(pred, gt);
      CHECK(doc["images"][i]["id"] == "img" + std::to_string(i));
    }
    CHECK(doc["aggregate"]["mae"].get<double>() == doctest::Approx(mae / 3).epsilon(1e-14));
    CHECK(doc["aggregate"]["s_measure"].get<double>() == doctest::Approx(s / 3).epsilon(1e-14));
  }

  TEST_CASE("eval: FMAP1 predictions are accepted") {
    const fs::path root = fresh("eval_fmap");
    write_eval_corpus(root);
    const auto gt = pgm::read_mask(root / "gt" / "img0.pgm");
    fs::remove(root / "pred" / "img0.pgm");
    Tensor t({1, 1, 24, 24});
    for (std::size_t i = 0; i < gt.size(); ++i) t[i] = gt[i] ? 1.0 : 0.0;
    fmap::write(root / "pred" / "img0.fmap", t);
    const auto r = invoke({"eval", (root / "pred").string(), (root / "gt").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["images"][0]["mae"] == 0.0);
  }

  TEST_CASE("eval: nothing in common exits with 2") {
    const fs::path root = fresh("eval_disjoint");
    write_eval_corpus(root);
    for (int i = 0; i < 3; ++i) {
      fs::rename(root / "pred" / ("img" + std::to_string(i) + ".pgm"),
                 root / "pred" / ("x" + std::to_string(i) + ".pgm"));
    }
    CHECK(invoke({"eval", (root / "pred").string(), (root / "gt").string()}).code == 2);
  }

  TEST_CASE("eval: independent of thread count") {
    const fs::path root = fresh("eval_threads");
    write_eval_corpus(root);
    const auto a = invoke({"eval", (root / "pred").string(), (root / "gt").string(), "--threads", "1"});
    const auto b = invoke({"eval", (root / "pred").string(), (root / "gt").string(), "--threads", "3"});
    CHECK(a.out == b.out);
  }

  TEST_CASE("similarity: duplicated image scores one") {
    const fs::path root = fresh("sim_dup");
    Rng rng(3);
    std::vector<double> v(40 * 30);
    for (double& x : v) x = rng.uniform();
    for (int i = 0; i < 5; ++i) {
      pgm::write_prediction(root / ("d" + std::to_string(i) + ".pgm"), PredictionMap(40, 30, v));
    }
    const auto r = invoke({"similarity", root.string(), "--size", "32"});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    CHECK(doc["pairs"] == 10);
    CHECK(doc["mean_ssim"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("similarity: constant images match the closed-form mean") {
    const fs::path root = fresh("sim_const");
    const std::vector<double> levels{0.0, 51.0 / 255, 153.0 / 255, 1.0};
    for (std::size_t i = 0; i < levels.size(); ++i) {
      pgm::write_prediction(root / ("c" + std::to_string(i) + ".pgm"), PredictionMap(20, 20, levels[i]));
    }
    const auto r = invoke({"similarity", root.string(), "--pairs", "0", "--out", (root / "s.json").string()});
    REQUIRE(r.code == 0);
    double expect = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) expect += oracle::ssim_constant(levels[i], levels[j]);
    expect /= 6;
    const json doc = json::parse(slurp(root / "s.json"));
    CHECK(std::abs(doc["mean_ssim"].get<double>() - expect) <= 1e-12);
    CHECK(r.out.find("pairs 6") != std::string::npos);
  }

  TEST_CASE("similarity: fewer than two images exits with 2") {
    const fs::path root = fresh("sim_one");
    pgm::write_prediction(root / "only.pgm", PredictionMap(16, 16, 0.5));
    CHECK(invoke({"similarity", root.string()}).code == 2);
  }

  TEST_CASE("neck-run: attention none equals the hypercolumn oracle") {
    const fs::path root = fresh("neck_oracle");
    Rng rng(4);
    const auto levels = corpus::pyramid(rng, 2, {3, 4, 5}, 8, 8);
    std::vector<std::string> args{"neck-run"};
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const fs::path p = root / ("F" + std::to_string(i + 1) + ".fmap");
      fmap::write(p, levels[i]);
      args.push_back(p.string());
    }
    for (const char* a : {"--attention", "none", "--upsample", "nearest", "--delta", "4", "--save-params"}) {
      args.push_back(a);
    }
    args.push_back((root / "params").string());
    args.push_back("--out");
    args.push_back((root / "out.fmap").string());
    const auto r = invoke(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);

    std::vector<FeatureMap> inputs;
    for (std::size_t i = 0; i < 3; ++i) inputs.push_back(fmap::read(root / ("F" + std::to_string(i + 1) + ".fmap")));
    NeckConfig cfg;
    cfg.widths = {3, 4, 5};
    cfg.delta = 4;
    cfg.attention = AttentionKind::none;
    const NeckParams params = NeckParams::from_tensors(cfg, fmap::load_manifest(root / "params" / "manifest.txt"));
    std::vector<FeatureMap> dbls;
    for (std::size_t i = 0; i < 3; ++i) dbls.push_back(dbl(inputs[i], params.dbl[i]));
    const FeatureMap expect = hypercolumn_fuse(dbls, params.projections, UpsampleMode::nearest);
    const FeatureMap got = fmap::read(root / "out.fmap");
    CHECK(got.shape() == Shape{2, 4, 8, 8});
    double worst = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      worst = std::max(worst, std::abs(got[i] - expect[i]) / std::max(1.0, std::abs(expect[i])));
    }
    CHECK(worst <= 1e-6);  // f32 storage
    CHECK(fs::exists(root / "out.fmap.json"));
  }

  TEST_CASE("neck-run: placements differ, reruns and thread counts do not") {
    const fs::path root = fresh("neck_det");
    Rng rng(5);
    const auto levels = corpus::pyramid(rng, 3, {4, 8, 8}, 8, 8);
    fs::create_directories(root / "levels");
    {
      std::ofstream manifest(root / "levels" / "pyramid.txt");
      for (std::size_t i = 0; i < levels.size(); ++i) {
        fmap::write(root / "levels" / ("F" + std::to_string(i + 1) + ".fmap"), levels[i]);
        manifest << "F" << i + 1 << " F" << i + 1 << ".fmap\n";
      }
    }
    auto run = [&](const std::string& placement, const std::string& threads, const std::string& name) {
      const fs::path out = root / name;
      const auto r = invoke({"neck-run", "--pyramid", (root / "levels" / "pyramid.txt").string(), "--delta", "8",
                          "--placement", placement, "--threads", threads, "--out", out.string()});
      REQUIRE_MESSAGE(r.code == 0, r.err);
      return slurp(out);
    };
    const std::string a1 = run("a", "1", "a1.fmap");
    CHECK(run("a", "1", "a2.fmap") == a1);
    CHECK(run("a", "3", "a3.fmap") == a1);
    CHECK(slurp(root / "a1.fmap.json") == slurp(root / "a1.fmap.json"));
    CHECK(run("d", "1", "d.fmap") != a1);
  }

  TEST_CASE("neck-run: pyramid violation exits with 2 and names dims") {
    const fs::path root = fresh("neck_bad");
    fmap::write(root / "F1.fmap", Tensor({1, 2, 8, 8}));
    fmap::write(root / "F2.fmap", Tensor({1, 2, 3, 3}));
    const auto r = invoke({"neck-run", (root / "F1.fmap").string(), (root / "F2.fmap").string(), "--out",
                        (root / "o.fmap").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("(1,2,3,3)") != std::string::npos);
    CHECK(invoke({"neck-run", (root / "F1.fmap").string(), (root / "F1.fmap").string()}).code == 2);
    CHECK(invoke({"neck-run", (root / "F1.fmap").string(), (root / "missing.fmap").string(), "--out",
               (root / "o.fmap").string()}).code == 2);
  }

  TEST_CASE("gradcheck: pass, corrupted hook and reproducible table") {
    const auto ok = invoke({"gradcheck", "--trials", "1"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("all cases PASS") != std::string::npos);
    CHECK(invoke({"gradcheck", "--trials", "1"}).out == ok.out);
    const auto bad = invoke({"gradcheck", "--cases", "cbam", "--corrupt", "cbam"});
    CHECK(bad.code != 0);
    CHECK(bad.out.find("FAIL") != std::string::npos);
  }

  TEST_CASE("polygon: convex corpus, labels and skipped masks") {
    const fs::path root = fresh("polygon");
    Rng rng(6);
    for (int i = 0; i < 6; ++i) {
      const auto outline = corpus::convex_outline(corpus::Family(i % 3), rng);
      pgm::write_mask(root / ("m" + std::to_string(i) + ".pgm"), rasterize_points(outline, 256, 256).mask);
    }
    BinaryMask dot(256, 256);
    dot.set(100, 100, true);
    pgm::write_mask(root / "dot.pgm", dot);
    pgm::write_mask(root / "empty.pgm", BinaryMask(256, 256));
    const auto r = invoke({"polygon", root.string(), "--out", (root / "poly.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json doc = json::parse(slurp(root / "poly.json"));
    CHECK(doc["masks"].size() == 6);
    CHECK(doc["mean_iou"].get<double>() >= 0.95);
    CHECK(doc["warnings"]["count"] == 2);
    CHECK(fs::exists(root / "m0.txt"));
    CHECK_FALSE(fs::exists(root / "dot.txt"));
    const PolygonDetection label = parse_label(slurp(root / "m0.txt"), 36);
    CHECK(label.vertices.size() == 36);
    CHECK(invoke({"polygon", fresh("polygon_empty").string()}).code == 2);
  }
}
