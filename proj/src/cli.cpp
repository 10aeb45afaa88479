#include "myolo/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "myolo/fmap_io.hpp"
#include "myolo/gradcheck.hpp"
#include "myolo/image.hpp"
#include "myolo/metrics.hpp"
#include "myolo/neck.hpp"
#include "myolo/parallel.hpp"
#include "myolo/polygon.hpp"
#include "myolo/report.hpp"

namespace myolo::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Bad user input; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Provenance block embedded in every output document. Thread counts are
/// left out so documents do not depend on the degree of parallelism.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::string config;
  std::string output;
  std::uint64_t seed = metrics::kDefaultSeed;
  json flags = json::object();

  json to_json() const {
    return {{"command", command}, {"inputs", inputs}, {"config", config},
            {"output", output},   {"seed", seed},     {"flags", flags}};
  }
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

/// Writes the document to `out_path` when given, otherwise to `out`.
void emit(const json& doc, const std::string& out_path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

/// Regular files in `dir` with one of `extensions`, sorted by filename.
std::vector<fs::path> list_files(const std::string& dir,
                                 std::initializer_list<std::string_view> extensions) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw InputError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    for (std::string_view e : extensions) {
      if (ext == e) {
        files.push_back(entry.path());
        break;
      }
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return files;
}

void warn(std::vector<std::string>& warnings, std::ostream& err, std::string msg) {
  err << "warning: " << msg << '\n';
  warnings.push_back(std::move(msg));
}

json warnings_json(const std::vector<std::string>& warnings) {
  return {{"count", warnings.size()}, {"messages", warnings}};
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir;
  std::string gt_dir;
  std::string out;
  double beta2 = metrics::kDefaultBeta2;
  double threshold = -1.0;  // < 0: adaptive
  double alpha = metrics::kDefaultAlpha;
  std::size_t threads = 1;
  std::uint64_t seed = metrics::kDefaultSeed;
};

PredictionMap load_prediction(const fs::path& path) {
  if (path.extension() == ".fmap") return PredictionMap::from_tensor(fmap::read(path));
  return pgm::read_prediction(path);
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  MetricConfig cfg;
  cfg.beta2 = a.beta2;
  cfg.alpha = a.alpha;
  if (a.threshold >= 0.0) cfg.threshold = a.threshold;

  std::vector<std::string> warnings;
  std::map<std::string, fs::path> gts, preds;
  for (const auto& p : list_files(a.gt_dir, {".pgm"})) gts[p.stem().string()] = p;
  for (const auto& p : list_files(a.pred_dir, {".pgm", ".fmap"})) {
    const std::string id = p.stem().string();
    if (!preds.emplace(id, p).second) {
      warn(warnings, err, "duplicate prediction for '" + id + "', using " +
                              preds[id].filename().string());
    }
  }
  std::vector<std::string> ids;
  for (const auto& [id, path] : preds) {
    if (gts.count(id)) {
      ids.push_back(id);
    } else {
      warn(warnings, err, "unmatched prediction " + path.filename().string());
    }
  }
  for (const auto& [id, path] : gts) {
    if (!preds.count(id)) warn(warnings, err, "unmatched ground truth " + path.filename().string());
  }
  if (ids.empty()) throw InputError("no prediction/ground-truth filenames in common");

  std::vector<std::optional<ImageRecord>> records(ids.size());
  std::vector<std::string> failures(ids.size());
  parallel_for(ids.size(), a.threads, [&](std::size_t i) {
    try {
      const PredictionMap pred = load_prediction(preds.at(ids[i]));
      const BinaryMask gt = pgm::read_mask(gts.at(ids[i]));
      records[i] = evaluate_image(ids[i], pred, gt, cfg);
    } catch (const std::exception& e) {
      failures[i] = ids[i] + ": " + e.what();
    }
  });
  std::vector<ImageRecord> ok;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (records[i]) {
      ok.push_back(std::move(*records[i]));
    } else {
      warn(warnings, err, "skipped " + failures[i]);
    }
  }
  if (ok.empty()) throw InputError("no image pair could be evaluated");
  const MetricReport report = build_report(std::move(ok), cfg);
  for (const auto& r : report.images) {
    if (!r.f_beta) warn(warnings, err, "f_beta undefined for '" + r.id + "' (empty ground truth)");
  }

  RunManifest m{"eval", {a.pred_dir, a.gt_dir}, "", a.out, a.seed, {}};
  m.flags = {{"beta2", a.beta2},
             {"threshold", cfg.threshold ? json(*cfg.threshold) : json("adaptive")},
             {"alpha", a.alpha}};
  json doc;
  doc["manifest"] = m.to_json();
  const json body = report.to_json();
  for (auto& [k, v] : body.items()) doc[k] = v;
  doc["warnings"] = warnings_json(warnings);
  emit(doc, a.out, out);
  if (!a.out.empty()) {
    const auto& agg = report.aggregate;
    out << "images " << agg.count << "  mae " << fixed(agg.mae) << "  f_beta "
        << (agg.f_beta ? fixed(*agg.f_beta) : std::string("n/a")) << "  e_measure "
        << fixed(agg.e_measure) << "  s_measure " << fixed(agg.s_measure)
        << "  warnings " << warnings.size() << '\n';
  }
  return kOk;
}

// --- similarity --------------------------------------------------------------

struct SimilarityArgs {
  std::string img_dir;
  std::string out;
  std::size_t pairs = 1000;
  std::size_t size = metrics::kSimilaritySide;
  std::size_t threads = 1;
  std::uint64_t seed = metrics::kDefaultSeed;
};

int cmd_similarity(const SimilarityArgs& a, std::ostream& out, std::ostream& err) {
  if (a.size < 11) throw InputError("--size must be at least 11 (SSIM window)");
  std::vector<std::string> warnings;
  const auto files = list_files(a.img_dir, {".pgm", ".fmap"});
  std::vector<std::optional<PredictionMap>> loaded(files.size());
  std::vector<std::string> failures(files.size());
  parallel_for(files.size(), a.threads, [&](std::size_t i) {
    try {
      loaded[i] = resize_bilinear(load_prediction(files[i]), a.size, a.size);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::vector<PredictionMap> images;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (loaded[i]) {
      images.push_back(std::move(*loaded[i]));
      names.push_back(files[i].filename().string());
    } else {
      warn(warnings, err, "skipped " + files[i].filename().string() + ": " + failures[i]);
    }
  }
  if (images.size() < 2) {
    throw InputError("similarity needs at least 2 readable images, found " +
                     std::to_string(images.size()));
  }
  const auto result = metrics::dataset_similarity(
      images, a.pairs, a.seed, a.threads);

  RunManifest m{"similarity", {a.img_dir}, "", a.out, a.seed, {}};
  m.flags = {{"pairs", a.pairs}, {"size", a.size}};
  json doc;
  doc["manifest"] = m.to_json();
  doc["images"] = names.size();
  doc["pairs"] = result.pairs;
  doc["mean_ssim"] = result.mean_ssim;
  doc["warnings"] = warnings_json(warnings);
  emit(doc, a.out, out);
  if (!a.out.empty()) {
    out << "mean_ssim " << fixed(result.mean_ssim, 9) << "\npairs " << result.pairs << '\n';
  }
  return kOk;
}

// --- neck-run ----------------------------------------------------------------

struct NeckArgs {
  std::vector<std::string> levels;
  std::string pyramid;
  std::string config;
  std::string params;
  std::string save_params;
  std::string placement;
  std::string attention;
  std::string upsample;
  std::size_t delta = 0;
  std::string out;
  std::size_t threads = 1;
  std::uint64_t seed = metrics::kDefaultSeed;
};

int cmd_neck_run(const NeckArgs& a, std::ostream& out, std::ostream&) {
  std::vector<std::string> paths = a.levels;
  if (!a.pyramid.empty()) {
    if (!paths.empty()) throw InputError("give level files or --pyramid, not both");
    for (const auto& [name, path] : fmap::read_manifest(a.pyramid)) paths.push_back(path.string());
  }
  if (paths.size() < 2) throw InputError("neck-run needs at least 2 pyramid levels");
  std::vector<FeatureMap> pyramid;
  for (const auto& p : paths) pyramid.push_back(fmap::read(p));
  validate_pyramid(pyramid);

  NeckConfig cfg;
  if (!a.config.empty()) {
    cfg = NeckConfig::load(a.config);
  } else {
    cfg.levels = pyramid.size();
    cfg.widths.clear();
    for (const auto& f : pyramid) cfg.widths.push_back(f.c());
  }
  if (a.delta) cfg.delta = a.delta;
  if (!a.placement.empty()) cfg.placement = parse_placement(a.placement);
  if (!a.attention.empty()) cfg.attention = parse_attention(a.attention);
  if (!a.upsample.empty()) cfg.upsample = parse_upsample(a.upsample);
  cfg.validate();
  if (pyramid.size() != cfg.levels) {
    throw InputError("config expects " + std::to_string(cfg.levels) +
                     " levels, got " + std::to_string(pyramid.size()));
  }
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    if (pyramid[i].c() != cfg.widths[i]) {
      throw InputError("level " + std::to_string(i + 1) + " " +
                       to_string(pyramid[i].shape()) + " does not have the configured " +
                       std::to_string(cfg.widths[i]) + " channels");
    }
  }

  NeckParams params;
  if (!a.params.empty()) {
    params = NeckParams::from_tensors(cfg, fmap::load_manifest(a.params));
  } else {
    // Rounded to f32 so that --save-params reproduces this run exactly.
    Rng rng(a.seed);
    fmap::TensorMap drawn = NeckParams::random(cfg, rng).to_tensors();
    for (auto& [name, t] : drawn) t = fmap::quantize(t);
    params = NeckParams::from_tensors(cfg, drawn);
  }
  params.validate(cfg);
  if (!a.save_params.empty()) fmap::save_manifest(a.save_params, params.to_tensors());

  // Samples are independent, so the batch is split across workers and
  // reassembled in order.
  const std::size_t batch = pyramid.front().n();
  std::vector<FeatureMap> fused(batch);
  parallel_for(batch, a.threads, [&](std::size_t s) {
    std::vector<FeatureMap> sample;
    for (const auto& f : pyramid) sample.push_back(slice_batch(f, s));
    fused[s] = assemble_neck(sample, cfg, params);
  });
  const FeatureMap result = concat_batch(fused);
  fmap::write(a.out, result);

  RunManifest m{"neck-run", paths, a.config, a.out, a.seed, {}};
  m.flags = {{"params", a.params},
             {"placement", std::string(to_string(cfg.placement))},
             {"attention", std::string(to_string(cfg.attention))},
             {"upsample", std::string(to_string(cfg.upsample))},
             {"delta", cfg.delta}};
  json doc;
  doc["manifest"] = m.to_json();
  doc["config"] = cfg.to_text();
  doc["output_dims"] = result.shape();
  write_text(a.out + ".json", doc.dump(2) + "\n");
  out << doc.dump(2) << '\n';
  return kOk;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  gradcheck::Options options;
  std::string out;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream&) {
  const auto report = gradcheck::run(a.options);
  json cases = json::array();
  out << "case                  configs  max_rel_error  status\n";
  for (const auto& c : report.cases) {
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %7zu  %13s  %s\n", c.name.c_str(),
                  c.configurations, sci(c.max_rel_error).c_str(),
                  c.passed ? "PASS" : "FAIL");
    out << line;
    cases.push_back({{"name", c.name},
                     {"configurations", c.configurations},
                     {"max_rel_error", c.max_rel_error},
                     {"passed", c.passed}});
  }
  out << (report.passed() ? "all cases PASS" : "gradient check FAILED") << " (tolerance "
      << sci(report.tolerance) << ", " << report.configurations() << " configurations)\n";
  if (!a.out.empty()) {
    RunManifest m{"gradcheck", {}, "", a.out, a.options.seed, {}};
    m.flags = {{"trials", a.options.trials},
               {"step", a.options.step},
               {"tolerance", a.options.tolerance},
               {"floor", a.options.floor},
               {"cases", a.options.cases},
               {"corrupt", a.options.corrupt}};
    json doc;
    doc["manifest"] = m.to_json();
    doc["cases"] = std::move(cases);
    doc["passed"] = report.passed();
    emit(doc, a.out, out);
  }
  return report.passed() ? kOk : kInternal;
}

// --- polygon -----------------------------------------------------------------

struct PolygonArgs {
  std::string mask_dir;
  std::string labels_dir;
  std::string out;
  std::size_t bins = kDefaultBins;
  double threshold = kDefaultVertexThreshold;
  std::uint64_t seed = metrics::kDefaultSeed;
};

int cmd_polygon(const PolygonArgs& a, std::ostream& out, std::ostream& err) {
  if (a.bins < 3) throw InputError("--bins must be >= 3");
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw InputError("--threshold must lie in [0,1]");
  const fs::path labels = a.labels_dir.empty() ? fs::path(a.mask_dir) : fs::path(a.labels_dir);
  fs::create_directories(labels);
  std::vector<std::string> warnings;
  json records = json::array();
  double iou_sum = 0.0;
  std::size_t evaluated = 0;
  for (const auto& path : list_files(a.mask_dir, {".pgm"})) {
    const std::string name = path.filename().string();
    BinaryMask mask;
    try {
      mask = pgm::read_mask(path);
    } catch (const FormatError& e) {
      warn(warnings, err, "skipped " + name + ": " + e.what());
      continue;
    }
    if (mask.count() == 0) {
      warn(warnings, err, "skipped " + name + ": empty mask");
      continue;
    }
    const PolygonDetection raw = encode_mask_to_polygon(mask, a.bins);
    const PolygonDetection poly = decode_vertices(raw, a.threshold);
    const auto points = polygon_points(poly, mask.height(), mask.width());
    if (points.size() < 3 || polygon_area(points) == 0.0) {
      warn(warnings, err, "skipped " + name + ": degenerate polygon (" +
                              std::to_string(points.size()) + " vertices, zero area)");
      continue;
    }
    const RasterResult raster = rasterize_polygon(poly, mask.height(), mask.width());
    const double iou = polygon_iou(mask, raster.mask);
    write_text(labels / (path.stem().string() + ".txt"), format_label(raw) + "\n");
    iou_sum += iou;
    ++evaluated;
    records.push_back({{"id", path.stem().string()},
                       {"vertices", poly.vertices.size()},
                       {"iou", iou}});
    out << path.stem().string() << ' ' << fixed(iou) << '\n';
  }
  if (evaluated == 0) throw InputError("no usable masks in " + a.mask_dir);
  const double mean_iou = iou_sum / static_cast<double>(evaluated);
  out << "mean_iou " << fixed(mean_iou) << " over " << evaluated << " masks, "
      << warnings.size() << " skipped\n";

  const auto head = head_parameter_report(256, 3, 1, a.bins);
  RunManifest m{"polygon", {a.mask_dir}, "", a.out, a.seed, {}};
  m.flags = {{"bins", a.bins}, {"threshold", a.threshold}, {"labels_dir", labels.string()}};
  json doc;
  doc["manifest"] = m.to_json();
  doc["masks"] = std::move(records);
  doc["mean_iou"] = mean_iou;
  doc["head_parameters"] = {{"in_channels", 256},
                            {"anchors", 3},
                            {"classes", 1},
                            {"box", head.box_parameters},
                            {"polygon", head.polygon_parameters},
                            {"ratio", head.overhead_ratio}};
  doc["warnings"] = warnings_json(warnings);
  if (!a.out.empty()) emit(doc, a.out, out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mirror-detection neck, polygon head and evaluation toolkit", "myolo"};
  app.require_subcommand(1);

  std::uint64_t seed = metrics::kDefaultSeed;
  std::string out_path;
  std::size_t threads = 1;
  auto shared = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
    sub->add_option("--out", out_path, "Output path");
  };
  auto with_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (output is identical for any value)")
        ->check(CLI::PositiveNumber);
  };

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score prediction maps against ground-truth masks");
  eval_cmd->add_option("pred_dir", eval.pred_dir, "Predictions (.pgm or .fmap)")->required();
  eval_cmd->add_option("gt_dir", eval.gt_dir, "Ground-truth masks (.pgm)")->required();
  eval_cmd->add_option("--beta2", eval.beta2, "F-beta weight beta^2")->capture_default_str();
  eval_cmd->add_option("--threshold", eval.threshold,
                       "Fixed binarisation threshold (default: adaptive 2*mean)");
  eval_cmd->add_option("--alpha", eval.alpha, "S-measure object/region balance")
      ->capture_default_str();
  shared(eval_cmd);
  with_threads(eval_cmd);

  SimilarityArgs sim;
  auto* sim_cmd = app.add_subcommand("similarity", "Mean pairwise SSIM of an image set");
  sim_cmd->add_option("img_dir", sim.img_dir, "Images (.pgm or .fmap)")->required();
  sim_cmd->add_option("--pairs", sim.pairs, "Pairs to sample, 0 for all")->capture_default_str();
  sim_cmd->add_option("--size", sim.size, "Common side length images are resized to")
      ->capture_default_str();
  shared(sim_cmd);
  with_threads(sim_cmd);

  NeckArgs neck;
  auto* neck_cmd = app.add_subcommand("neck-run", "Run the fusion neck on a feature pyramid");
  neck_cmd->add_option("levels", neck.levels, "FMAP1 level files, finest first");
  neck_cmd->add_option("--pyramid", neck.pyramid, "Manifest listing the levels, finest first");
  neck_cmd->add_option("--config", neck.config, "Neck config (key=value)");
  neck_cmd->add_option("--params", neck.params, "Parameter manifest (random from --seed if absent)");
  neck_cmd->add_option("--save-params", neck.save_params, "Write the parameters used to this directory");
  neck_cmd->add_option("--placement", neck.placement, "a|b|c|d|none");
  neck_cmd->add_option("--attention", neck.attention, "cbam|se|none");
  neck_cmd->add_option("--upsample", neck.upsample, "nearest|bilinear");
  neck_cmd->add_option("--delta", neck.delta, "Fused channel width");
  shared(neck_cmd);
  with_threads(neck_cmd);

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  grad_cmd->add_option("--trials", grad.options.trials, "Random configurations per case")
      ->capture_default_str();
  grad_cmd->add_option("--step", grad.options.step, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", grad.options.tolerance, "Maximum relative error")
      ->capture_default_str();
  grad_cmd->add_option("--cases", grad.options.cases, "Restrict to these cases");
  grad_cmd->add_option("--corrupt", grad.options.corrupt)->group("");
  shared(grad_cmd);

  PolygonArgs poly;
  auto* poly_cmd = app.add_subcommand("polygon", "Mask -> polygon label -> mask round trip");
  poly_cmd->add_option("mask_dir", poly.mask_dir, "Binary masks (.pgm)")->required();
  poly_cmd->add_option("--bins", poly.bins, "Angular sectors")->capture_default_str();
  poly_cmd->add_option("--threshold", poly.threshold, "Vertex confidence threshold")
      ->capture_default_str();
  poly_cmd->add_option("--labels-dir", poly.labels_dir, "Where label files go (default: mask_dir)");
  shared(poly_cmd);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kBadInput;
  }

  try {
    if (*eval_cmd) {
      eval.out = out_path;
      eval.seed = seed;
      eval.threads = threads;
      return cmd_eval(eval, out, err);
    }
    if (*sim_cmd) {
      sim.out = out_path;
      sim.seed = seed;
      sim.threads = threads;
      return cmd_similarity(sim, out, err);
    }
    if (*neck_cmd) {
      if (out_path.empty()) throw InputError("neck-run requires --out");
      neck.out = out_path;
      neck.seed = seed;
      neck.threads = threads;
      return cmd_neck_run(neck, out, err);
    }
    if (*grad_cmd) {
      grad.out = out_path;
      grad.options.seed = seed;
      return cmd_gradcheck(grad, out, err);
    }
    if (*poly_cmd) {
      poly.out = out_path;
      poly.seed = seed;
      return cmd_polygon(poly, out, err);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace myolo::cli
