#include "myolo/neck.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

namespace myolo {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw FormatError("neck config: " + std::string(key) +
                      " expects a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw FormatError("neck config: " + std::string(key) +
                    " expects a real number, got '" + v + "'");
}

std::string key(std::string_view prefix, std::size_t i, std::string_view field) {
  std::string k(prefix);
  k += std::to_string(i);
  if (!field.empty()) {
    k += '.';
    k += field;
  }
  return k;
}

const Tensor& lookup(const fmap::TensorMap& t, const std::string& name) {
  const auto it = t.find(name);
  if (it == t.end()) throw FormatError("neck parameters: missing tensor " + name);
  return it->second;
}

void require_width(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 4 || x.c() != width) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(width) +
                     " channels, got " + to_string(x.shape()));
  }
}

}  // namespace

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::a: return "a";
    case Placement::b: return "b";
    case Placement::c: return "c";
    case Placement::d: return "d";
    case Placement::none: return "none";
  }
  return "none";
}

std::string_view to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::cbam: return "cbam";
    case AttentionKind::se: return "se";
    case AttentionKind::none: return "none";
  }
  return "none";
}

std::string_view to_string(UpsampleMode m) {
  return m == UpsampleMode::nearest ? "nearest" : "bilinear";
}

Placement parse_placement(std::string_view s) {
  if (s == "a") return Placement::a;
  if (s == "b") return Placement::b;
  if (s == "c") return Placement::c;
  if (s == "d") return Placement::d;
  if (s == "none") return Placement::none;
  throw ValueError("unknown placement '" + std::string(s) + "' (a|b|c|d|none)");
}

AttentionKind parse_attention(std::string_view s) {
  if (s == "cbam") return AttentionKind::cbam;
  if (s == "se") return AttentionKind::se;
  if (s == "none") return AttentionKind::none;
  throw ValueError("unknown attention '" + std::string(s) + "' (cbam|se|none)");
}

UpsampleMode parse_upsample(std::string_view s) {
  if (s == "nearest") return UpsampleMode::nearest;
  if (s == "bilinear") return UpsampleMode::bilinear;
  throw ValueError("unknown upsample mode '" + std::string(s) +
                   "' (nearest|bilinear)");
}

// --- DBL ---------------------------------------------------------------------

void DblParams::validate() const {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) {
    throw ShapeError("dbl: kernel must be (out_c,in_c,k,k) with odd k, got " +
                     to_string(kernel.shape()));
  }
  const std::size_t out = kernel.dim(0);
  for (const Tensor* t : {&gamma, &beta, &running_mean, &running_var}) {
    if (t->size() != out) {
      throw ShapeError("dbl: batch-norm vectors must have " +
                       std::to_string(out) + " entries");
    }
  }
  for (double v : running_var.data()) {
    if (v < 0.0) throw ValueError("dbl: running_var must be >= 0");
  }
  if (!(eps > 0.0)) throw ValueError("dbl: eps must be > 0");
}

DblParams DblParams::identity(std::size_t channels, double slope) {
  DblParams p;
  p.kernel = Tensor({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) p.kernel.at(c, c, 0, 0) = 1.0;
  p.gamma = Tensor({channels}, 1.0);
  p.beta = Tensor({channels}, 0.0);
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  p.leaky_slope = slope;
  return p;
}

DblParams DblParams::random(std::size_t in_c, std::size_t out_c, std::size_t k,
                            Rng& rng, double slope) {
  DblParams p;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_c * k * k));
  p.kernel = rng.tensor({out_c, in_c, k, k}, -scale, scale);
  p.gamma = rng.tensor({out_c}, 0.5, 1.5);
  p.beta = rng.tensor({out_c}, -0.2, 0.2);
  p.running_mean = rng.tensor({out_c}, -0.1, 0.1);
  p.running_var = rng.tensor({out_c}, 0.5, 1.5);
  p.leaky_slope = slope;
  return p;
}

DblVars bind(Tape& tape, const DblParams& p) {
  p.validate();
  return {tape.input(p.kernel, "dbl.kernel"),
          tape.input(p.gamma, "dbl.gamma"),
          tape.input(p.beta, "dbl.beta"),
          tape.input(p.running_mean, "dbl.mean"),
          tape.input(p.running_var, "dbl.var"),
          p.eps,
          p.leaky_slope};
}

// --- config ------------------------------------------------------------------

void NeckConfig::validate() const {
  if (levels < 2) throw ValueError("neck config: levels must be >= 2");
  if (widths.size() != levels) {
    throw ValueError("neck config: " + std::to_string(widths.size()) +
                     " widths for " + std::to_string(levels) + " levels");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ValueError("neck config: widths must be positive");
  }
  if (delta < 1) throw ValueError("neck config: delta must be >= 1");
  if (reduction < 1) throw ValueError("neck config: reduction must be >= 1");
  if (spatial_kernel % 2 == 0) throw ValueError("neck config: spatial_kernel must be odd");
  if (dbl_kernel % 2 == 0) throw ValueError("neck config: dbl_kernel must be odd");
  if (!(bn_eps > 0.0)) throw ValueError("neck config: bn_eps must be > 0");
}

NeckConfig NeckConfig::parse(std::string_view text) {
  NeckConfig cfg;
  bool widths_given = false;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError("neck config line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    const std::string k = trim(std::string_view(body).substr(0, eq));
    const std::string v = trim(std::string_view(body).substr(eq + 1));
    if (k == "levels") {
      cfg.levels = parse_count(k, v);
    } else if (k == "widths") {
      cfg.widths.clear();
      std::istringstream ws(v);
      std::string item;
      while (std::getline(ws, item, ',')) cfg.widths.push_back(parse_count(k, trim(item)));
      widths_given = true;
    } else if (k == "delta") {
      cfg.delta = parse_count(k, v);
    } else if (k == "placement") {
      cfg.placement = parse_placement(v);
    } else if (k == "attention") {
      cfg.attention = parse_attention(v);
    } else if (k == "upsample") {
      cfg.upsample = parse_upsample(v);
    } else if (k == "reduction") {
      cfg.reduction = parse_count(k, v);
    } else if (k == "spatial_kernel") {
      cfg.spatial_kernel = parse_count(k, v);
    } else if (k == "dbl_kernel") {
      cfg.dbl_kernel = parse_count(k, v);
    } else if (k == "leaky_slope") {
      cfg.leaky_slope = parse_real(k, v);
    } else if (k == "bn_eps") {
      cfg.bn_eps = parse_real(k, v);
    } else {
      throw FormatError("neck config line " + std::to_string(lineno) +
                        ": unknown key '" + k + "'");
    }
  }
  if (!widths_given && cfg.widths.size() != cfg.levels) {
    throw FormatError("neck config: widths must be given when levels != 3");
  }
  return cfg;
}

NeckConfig NeckConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open neck config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string NeckConfig::to_text() const {
  std::ostringstream os;
  os << "levels=" << levels << "\nwidths=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << "\ndelta=" << delta << "\nplacement=" << to_string(placement)
     << "\nattention=" << to_string(attention)
     << "\nupsample=" << to_string(upsample) << "\nreduction=" << reduction
     << "\nspatial_kernel=" << spatial_kernel << "\ndbl_kernel=" << dbl_kernel
     << "\nleaky_slope=" << leaky_slope << "\nbn_eps=" << bn_eps << '\n';
  return os.str();
}

std::vector<std::size_t> NeckConfig::hook_widths() const {
  if (attention == AttentionKind::none) return {};
  switch (placement) {
    case Placement::a: return std::vector<std::size_t>(levels - 1, delta);
    case Placement::b:
    case Placement::c: return widths;
    case Placement::d: return {delta};
    case Placement::none: return {};
  }
  return {};
}

// --- parameters --------------------------------------------------------------

AttentionBlock AttentionBlock::zeros(AttentionKind kind, std::size_t channels,
                                     std::size_t reduction,
                                     std::size_t spatial_kernel) {
  AttentionBlock b;
  b.kind = kind;
  if (kind == AttentionKind::cbam) {
    b.channel = ChannelAttentionParams::zeros(channels, reduction);
    b.spatial = SpatialAttentionParams::zeros(spatial_kernel);
  } else if (kind == AttentionKind::se) {
    b.se = SEParams::zeros(channels, reduction);
  }
  return b;
}

AttentionBlock AttentionBlock::random(AttentionKind kind, std::size_t channels,
                                      std::size_t reduction,
                                      std::size_t spatial_kernel, Rng& rng) {
  AttentionBlock b;
  b.kind = kind;
  if (kind == AttentionKind::cbam) {
    b.channel = ChannelAttentionParams::random(channels, reduction, rng);
    b.spatial = SpatialAttentionParams::random(spatial_kernel, rng);
  } else if (kind == AttentionKind::se) {
    b.se = SEParams::random(channels, reduction, rng);
  }
  return b;
}

void NeckParams::validate(const NeckConfig& cfg) const {
  cfg.validate();
  if (dbl.size() != cfg.levels || projections.size() != cfg.levels) {
    throw ShapeError("neck parameters: expected " + std::to_string(cfg.levels) +
                     " DBL blocks and projections");
  }
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    dbl[i].validate();
    if (dbl[i].kernel.dim(1) != cfg.widths[i] || dbl[i].kernel.dim(0) != cfg.widths[i]) {
      throw ShapeError("neck parameters: dbl" + std::to_string(i) + " kernel " +
                       to_string(dbl[i].kernel.shape()) + " does not map width " +
                       std::to_string(cfg.widths[i]) + " to itself");
    }
    const Shape want{cfg.delta, cfg.widths[i], 1, 1};
    if (projections[i].shape() != want) {
      throw ShapeError("neck parameters: m" + std::to_string(i) + " is " +
                       to_string(projections[i].shape()) + ", expected " +
                       to_string(want));
    }
  }
  const auto widths = cfg.hook_widths();
  if (hooks.size() != widths.size()) {
    throw ShapeError("neck parameters: " + std::to_string(hooks.size()) +
                     " attention hooks, placement needs " +
                     std::to_string(widths.size()));
  }
  for (std::size_t i = 0; i < hooks.size(); ++i) {
    const AttentionBlock& h = hooks[i];
    if (h.kind != cfg.attention) {
      throw ShapeError("neck parameters: hook kind does not match config");
    }
    if (h.kind == AttentionKind::cbam) {
      h.channel.validate();
      h.spatial.validate();
      if (h.channel.channels() != widths[i]) {
        throw ShapeError("neck parameters: hook" + std::to_string(i) + " expects " +
                         std::to_string(h.channel.channels()) + " channels, needs " +
                         std::to_string(widths[i]));
      }
    } else if (h.kind == AttentionKind::se) {
      h.se.validate();
      if (h.se.channels() != widths[i]) {
        throw ShapeError("neck parameters: hook" + std::to_string(i) + " expects " +
                         std::to_string(h.se.channels()) + " channels, needs " +
                         std::to_string(widths[i]));
      }
    }
  }
}

namespace {

NeckParams random_backbone(const NeckConfig& cfg, Rng& rng) {
  cfg.validate();
  NeckParams p;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    p.dbl.push_back(DblParams::random(cfg.widths[i], cfg.widths[i],
                                      cfg.dbl_kernel, rng, cfg.leaky_slope));
    p.dbl.back().eps = cfg.bn_eps;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.widths[i]));
    p.projections.push_back(rng.tensor({cfg.delta, cfg.widths[i], 1, 1}, -scale, scale));
  }
  return p;
}

}  // namespace

NeckParams NeckParams::random(const NeckConfig& cfg, Rng& rng) {
  NeckParams p = random_backbone(cfg, rng);
  for (std::size_t w : cfg.hook_widths()) {
    p.hooks.push_back(AttentionBlock::random(cfg.attention, w, cfg.reduction,
                                             cfg.spatial_kernel, rng));
  }
  return p;
}

NeckParams NeckParams::random_with_zero_attention(const NeckConfig& cfg, Rng& rng) {
  NeckParams p = random_backbone(cfg, rng);
  for (std::size_t w : cfg.hook_widths()) {
    p.hooks.push_back(AttentionBlock::zeros(cfg.attention, w, cfg.reduction,
                                            cfg.spatial_kernel));
  }
  return p;
}

fmap::TensorMap NeckParams::to_tensors() const {
  fmap::TensorMap t;
  for (std::size_t i = 0; i < dbl.size(); ++i) {
    t[key("dbl", i, "kernel")] = dbl[i].kernel;
    t[key("dbl", i, "gamma")] = dbl[i].gamma;
    t[key("dbl", i, "beta")] = dbl[i].beta;
    t[key("dbl", i, "mean")] = dbl[i].running_mean;
    t[key("dbl", i, "var")] = dbl[i].running_var;
  }
  for (std::size_t i = 0; i < projections.size(); ++i) t[key("m", i, "")] = projections[i];
  for (std::size_t i = 0; i < hooks.size(); ++i) {
    const AttentionBlock& h = hooks[i];
    if (h.kind == AttentionKind::cbam) {
      t[key("hook", i, "ca.w0")] = h.channel.w0;
      t[key("hook", i, "ca.w1")] = h.channel.w1;
      t[key("hook", i, "sa.kernel")] = h.spatial.kernel;
      t[key("hook", i, "sa.bias")] = Tensor::scalar(h.spatial.bias);
    } else if (h.kind == AttentionKind::se) {
      t[key("hook", i, "se.w0")] = h.se.w0;
      t[key("hook", i, "se.w1")] = h.se.w1;
    }
  }
  return t;
}

NeckParams NeckParams::from_tensors(const NeckConfig& cfg,
                                    const fmap::TensorMap& t) {
  cfg.validate();
  NeckParams p;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    DblParams d;
    d.kernel = lookup(t, key("dbl", i, "kernel"));
    d.gamma = lookup(t, key("dbl", i, "gamma"));
    d.beta = lookup(t, key("dbl", i, "beta"));
    d.running_mean = lookup(t, key("dbl", i, "mean"));
    d.running_var = lookup(t, key("dbl", i, "var"));
    d.eps = cfg.bn_eps;
    d.leaky_slope = cfg.leaky_slope;
    p.dbl.push_back(std::move(d));
    p.projections.push_back(lookup(t, key("m", i, "")));
  }
  const auto widths = cfg.hook_widths();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    AttentionBlock h;
    h.kind = cfg.attention;
    auto mlp = [&](const char* w0, const char* w1) {
      Tensor a = lookup(t, key("hook", i, w0));
      Tensor b = lookup(t, key("hook", i, w1));
      if (a.rank() != 2 || a.dim(0) == 0) {
        throw ShapeError("neck parameters: hook" + std::to_string(i) +
                         " MLP weight must be a non-empty matrix");
      }
      const std::size_t r = a.dim(1) / a.dim(0);
      return std::tuple{std::move(a), std::move(b), r};
    };
    if (h.kind == AttentionKind::cbam) {
      auto [w0, w1, r] = mlp("ca.w0", "ca.w1");
      h.channel = {std::move(w0), std::move(w1), r};
      const Tensor& bias = lookup(t, key("hook", i, "sa.bias"));
      if (bias.size() != 1) throw ShapeError("neck parameters: sa.bias must be a scalar");
      h.spatial = {lookup(t, key("hook", i, "sa.kernel")), bias[0]};
    } else {
      auto [w0, w1, r] = mlp("se.w0", "se.w1");
      h.se = {std::move(w0), std::move(w1), r};
    }
    p.hooks.push_back(std::move(h));
  }
  p.validate(cfg);
  return p;
}

AttentionVars bind(Tape& tape, const AttentionBlock& block) {
  AttentionVars v;
  v.kind = block.kind;
  if (block.kind == AttentionKind::cbam) {
    v.channel = bind(tape, block.channel);
    v.spatial = bind(tape, block.spatial);
  } else if (block.kind == AttentionKind::se) {
    v.se = bind(tape, block.se);
  }
  return v;
}

void validate_pyramid(std::span<const FeatureMap> pyramid) {
  if (pyramid.empty()) throw ShapeError("pyramid: no levels");
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    if (pyramid[i].rank() != 4) {
      throw ShapeError("pyramid: level " + std::to_string(i + 1) + " is " +
                       to_string(pyramid[i].shape()) + ", expected (n,c,h,w)");
    }
  }
  for (std::size_t i = 0; i + 1 < pyramid.size(); ++i) {
    const FeatureMap& fine = pyramid[i];
    const FeatureMap& coarse = pyramid[i + 1];
    if (fine.n() != coarse.n() || fine.h() != 2 * coarse.h() ||
        fine.w() != 2 * coarse.w()) {
      throw ShapeError("pyramid: level " + std::to_string(i + 1) + " " +
                       to_string(fine.shape()) + " is not twice level " +
                       std::to_string(i + 2) + " " + to_string(coarse.shape()));
    }
  }
}

// --- forward -----------------------------------------------------------------

namespace ad {

Var dbl(Var x, const DblVars& p) {
  const std::size_t k = p.kernel.value().dim(2);
  Var conv = conv2d(x, p.kernel, std::nullopt, 1, (k - 1) / 2);
  return leaky_relu(batch_norm(conv, p.gamma, p.beta, p.mean, p.var, p.eps),
                    p.slope);
}

Var project_m(Var x, Var weights) {
  const Tensor& w = weights.value();
  if (w.rank() != 4 || w.dim(2) != 1 || w.dim(3) != 1) {
    throw ShapeError("project_m: weights must be a 1x1 conv (delta,c,1,1), got " +
                     to_string(w.shape()));
  }
  return conv2d(x, weights, std::nullopt, 1, 0);
}

Var attend(Var x, const AttentionVars& hook) {
  switch (hook.kind) {
    case AttentionKind::cbam: return apply_cbam(x, hook.channel, hook.spatial);
    case AttentionKind::se: return apply_se(x, hook.se);
    case AttentionKind::none: return x;
  }
  return x;
}

namespace {

void check_pyramid(std::span<const Var> pyramid, std::span<const Var> weights) {
  std::vector<FeatureMap> values;
  values.reserve(pyramid.size());
  for (const Var& v : pyramid) values.push_back(v.value());
  validate_pyramid(values);
  if (weights.size() != pyramid.size()) {
    throw ShapeError("fusion: " + std::to_string(weights.size()) +
                     " projections for " + std::to_string(pyramid.size()) +
                     " levels");
  }
  const std::size_t delta = weights[0].value().dim(0);
  for (const Var& w : weights) {
    if (w.value().rank() != 4 || w.value().dim(0) != delta) {
      throw ShapeError("fusion: every projection must produce " +
                       std::to_string(delta) + " channels");
    }
  }
}

}  // namespace

Var hypercolumn_fuse(std::span<const Var> pyramid, std::span<const Var> weights,
                     UpsampleMode mode) {
  check_pyramid(pyramid, weights);
  Var acc = project_m(pyramid[0], weights[0]);
  for (std::size_t i = 1; i < pyramid.size(); ++i) {
    acc = add(acc, upsample(project_m(pyramid[i], weights[i]), std::size_t{1} << i, mode));
  }
  return acc;
}

Var stairstep_fuse(std::span<const Var> pyramid, std::span<const Var> weights,
                   UpsampleMode mode) {
  check_pyramid(pyramid, weights);
  const std::size_t n = pyramid.size();
  Var acc = project_m(pyramid[n - 1], weights[n - 1]);
  for (std::size_t i = n - 1; i-- > 0;) {
    acc = add(upsample(acc, 2, mode), project_m(pyramid[i], weights[i]));
  }
  return acc;
}

Var assemble_neck(std::span<const Var> pyramid, const NeckConfig& cfg,
                  std::span<const DblVars> dbl_params,
                  std::span<const Var> projections,
                  std::span<const AttentionVars> hooks) {
  cfg.validate();
  std::vector<FeatureMap> values;
  for (const Var& v : pyramid) values.push_back(v.value());
  validate_pyramid(values);
  if (pyramid.size() != cfg.levels) {
    throw ShapeError("neck: config has " + std::to_string(cfg.levels) +
                     " levels, pyramid has " + std::to_string(pyramid.size()));
  }
  if (dbl_params.size() != cfg.levels || projections.size() != cfg.levels ||
      hooks.size() != cfg.hook_widths().size()) {
    throw ShapeError("neck: parameter counts do not match config");
  }
  const bool hooked = cfg.attention != AttentionKind::none;
  std::size_t next_hook = 0;
  auto hook = [&](Var x) { return attend(x, hooks[next_hook++]); };

  std::vector<Var> projected;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    require_width(values[i], cfg.widths[i], "neck");
    Var x = pyramid[i];
    if (hooked && cfg.placement == Placement::c) x = hook(x);
    x = dbl(x, dbl_params[i]);
    if (hooked && cfg.placement == Placement::b) x = hook(x);
    projected.push_back(project_m(x, projections[i]));
  }
  Var acc = projected.back();
  for (std::size_t i = cfg.levels - 1; i-- > 0;) {
    acc = add(upsample(acc, 2, cfg.upsample), projected[i]);
    if (hooked && cfg.placement == Placement::a) acc = hook(acc);
  }
  if (hooked && cfg.placement == Placement::d) acc = hook(acc);
  return acc;
}

}  // namespace ad

FeatureMap dbl(const FeatureMap& x, const DblParams& p) {
  Tape tape;
  return ad::dbl(tape.input(x), bind(tape, p)).value();
}

FeatureMap project_m(const FeatureMap& x, const Tensor& weights) {
  Tape tape;
  return ad::project_m(tape.input(x), tape.input(weights)).value();
}

namespace {

template <typename Fuse>
FeatureMap fuse_values(std::span<const FeatureMap> pyramid,
                       std::span<const Tensor> weights, Fuse&& fuse) {
  Tape tape;
  std::vector<Var> levels, ws;
  for (const auto& f : pyramid) levels.push_back(tape.input(f));
  for (const auto& w : weights) ws.push_back(tape.input(w));
  return fuse(std::span<const Var>(levels), std::span<const Var>(ws)).value();
}

}  // namespace

FeatureMap hypercolumn_fuse(std::span<const FeatureMap> pyramid,
                            std::span<const Tensor> weights, UpsampleMode mode) {
  return fuse_values(pyramid, weights, [mode](auto l, auto w) {
    return ad::hypercolumn_fuse(l, w, mode);
  });
}

FeatureMap stairstep_fuse(std::span<const FeatureMap> pyramid,
                          std::span<const Tensor> weights, UpsampleMode mode) {
  return fuse_values(pyramid, weights, [mode](auto l, auto w) {
    return ad::stairstep_fuse(l, w, mode);
  });
}

FeatureMap assemble_neck(std::span<const FeatureMap> pyramid,
                         const NeckConfig& cfg, const NeckParams& params) {
  params.validate(cfg);
  Tape tape;
  std::vector<Var> levels, projections;
  std::vector<DblVars> dbl_vars;
  std::vector<AttentionVars> hook_vars;
  for (const auto& f : pyramid) levels.push_back(tape.input(f));
  for (const auto& d : params.dbl) dbl_vars.push_back(bind(tape, d));
  for (const auto& m : params.projections) projections.push_back(tape.input(m));
  for (const auto& h : params.hooks) hook_vars.push_back(bind(tape, h));
  return ad::assemble_neck(levels, cfg, dbl_vars, projections, hook_vars).value();
}

}  // namespace myolo
