#include "myolo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "myolo/attention.hpp"
#include "myolo/neck.hpp"

namespace myolo::gradcheck {
namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

double eval_loss(const Problem& p, std::span<const Tensor> inputs,
                 const Tensor& weights) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.input(t));
  const Tensor& out = p.build(vars).value();
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

// Random (n, c, h, w) with entries in [-1, 1].
Tensor fm(Rng& rng, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return rng.tensor({n, c, h, w});
}

struct Extent {
  std::size_t lo;
  std::size_t hi;
};

// Draws the dims in a fixed order, then the values.
Tensor fm(Rng& rng, Extent n, Extent c, Extent h, Extent w) {
  const std::size_t nn = pick(rng, n.lo, n.hi);
  const std::size_t cc = pick(rng, c.lo, c.hi);
  const std::size_t hh = pick(rng, h.lo, h.hi);
  const std::size_t ww = pick(rng, w.lo, w.hi);
  return fm(rng, nn, cc, hh, ww);
}

Problem conv_problem(Rng& rng) {
  const std::size_t stride = pick(rng, 1, 2);
  const std::size_t k = rng.below(2) ? 3 : 1;
  const std::size_t pad = k / 2;
  // Odd extents keep (h + 2 pad - k) divisible by a stride of 2.
  const std::size_t h = 2 * pick(rng, 1, 3) + 1, w = 2 * pick(rng, 1, 3) + 1;
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), o = pick(rng, 1, 3);
  return {"conv2d k=" + std::to_string(k) + " stride=" + std::to_string(stride),
          {fm(rng, n, c, h, w), rng.tensor({o, c, k, k}), rng.tensor({o})},
          [stride, pad](std::span<const Var> v) {
            return ad::conv2d(v[0], v[1], v[2], stride, pad);
          }};
}

Problem pool_problem(Rng& rng, bool global, PoolMode mode) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 4);
  const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5);
  return {"pool", {fm(rng, n, c, h, w)}, [global, mode](std::span<const Var> v) {
            return global ? ad::pool_global(v[0], mode)
                          : ad::pool_channelwise(v[0], mode);
          }};
}

Problem dense_problem(Rng& rng, Activation act) {
  const std::size_t b = pick(rng, 1, 3), in = pick(rng, 1, 8), out = pick(rng, 1, 4);
  return {"dense",
          {rng.tensor({b, in}), rng.tensor({out, in}), rng.tensor({out})},
          [act](std::span<const Var> v) { return ad::dense(v[0], v[1], v[2], act); }};
}

Problem upsample_problem(Rng& rng, UpsampleMode mode) {
  const std::size_t factor = pick(rng, 2, 3);
  return {"upsample x" + std::to_string(factor),
          {fm(rng, Extent{1, 2}, Extent{1, 3}, Extent{1, 4}, Extent{1, 4})},
          [factor, mode](std::span<const Var> v) {
            return ad::upsample(v[0], factor, mode);
          }};
}

Problem broadcast_problem(Rng& rng, BinaryOp op) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 2, 4), w = pick(rng, 2, 4);
  const bool per_channel = rng.below(2) == 0;
  Tensor b = per_channel ? fm(rng, n, c, 1, 1) : fm(rng, n, 1, h, w);
  return {per_channel ? "broadcast (n,c,1,1)" : "broadcast (n,1,h,w)",
          {fm(rng, n, c, h, w), std::move(b)},
          [op](std::span<const Var> v) { return ad::elementwise(v[0], v[1], op); }};
}

std::size_t attention_channels(Rng& rng) { return 2 * pick(rng, 1, 3); }

Problem channel_attention_problem(Rng& rng) {
  const std::size_t c = attention_channels(rng);
  const auto p = ChannelAttentionParams::random(c, pick(rng, 1, 2), rng, 1.0);
  return {"c=" + std::to_string(c),
          {fm(rng, Extent{1, 2}, Extent{c, c}, Extent{2, 5}, Extent{2, 5}), p.w0, p.w1},
          [](std::span<const Var> v) {
            return ad::channel_attention(v[0], {v[1], v[2]});
          }};
}

Problem spatial_attention_problem(Rng& rng) {
  const std::size_t k = rng.below(2) ? 7 : 3;
  const auto p = SpatialAttentionParams::random(k, rng, 1.0);
  return {"k=" + std::to_string(k),
          {fm(rng, Extent{1, 2}, Extent{1, 4}, Extent{3, 6}, Extent{3, 6}),
           p.kernel, Tensor::scalar(p.bias)},
          [](std::span<const Var> v) {
            return ad::spatial_attention(v[0], {v[1], v[2]});
          }};
}

Problem cbam_problem(Rng& rng) {
  const std::size_t c = attention_channels(rng);
  const std::size_t k = rng.below(2) ? 7 : 3;
  const auto ca = ChannelAttentionParams::random(c, pick(rng, 1, 2), rng, 1.0);
  const auto sa = SpatialAttentionParams::random(k, rng, 1.0);
  return {"c=" + std::to_string(c) + " k=" + std::to_string(k),
          {fm(rng, Extent{1, 2}, Extent{c, c}, Extent{3, 5}, Extent{3, 5}), ca.w0,
           ca.w1, sa.kernel, Tensor::scalar(sa.bias)},
          [](std::span<const Var> v) {
            return ad::apply_cbam(v[0], {v[1], v[2]}, {v[3], v[4]});
          }};
}

Problem se_problem(Rng& rng) {
  const std::size_t c = attention_channels(rng);
  const auto p = SEParams::random(c, pick(rng, 1, 2), rng, 1.0);
  return {"c=" + std::to_string(c),
          {fm(rng, Extent{1, 2}, Extent{c, c}, Extent{2, 5}, Extent{2, 5}), p.w0, p.w1},
          [](std::span<const Var> v) { return ad::apply_se(v[0], {v[1], v[2]}); }};
}

Problem dbl_problem(Rng& rng) {
  const std::size_t in = pick(rng, 1, 3), out = pick(rng, 1, 3);
  const std::size_t k = rng.below(2) ? 3 : 1;
  const auto p = DblParams::random(in, out, k, rng);
  const double eps = p.eps, slope = p.leaky_slope;
  return {"k=" + std::to_string(k),
          {fm(rng, Extent{1, 2}, Extent{in, in}, Extent{2, 5}, Extent{2, 5}), p.kernel,
           p.gamma, p.beta, p.running_mean, p.running_var},
          [eps, slope](std::span<const Var> v) {
            return ad::dbl(v[0], {v[1], v[2], v[3], v[4], v[5], eps, slope});
          }};
}

Problem fusion_problem(Rng& rng, UpsampleMode mode, bool stairstep) {
  const std::size_t levels = pick(rng, 2, 3);
  const std::size_t n = pick(rng, 1, 2), delta = pick(rng, 1, 3);
  const std::size_t base = pick(rng, 1, 2);
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t side = base << (levels - 1 - i);
    const std::size_t c = pick(rng, 1, 3);
    inputs.push_back(fm(rng, n, c, side, side));
  }
  for (std::size_t i = 0; i < levels; ++i) {
    inputs.push_back(rng.tensor({delta, inputs[i].c(), 1, 1}));
  }
  return {std::to_string(levels) + " levels",
          std::move(inputs),
          [levels, mode, stairstep](std::span<const Var> v) {
            const auto pyr = v.subspan(0, levels);
            const auto ws = v.subspan(levels, levels);
            return stairstep ? ad::stairstep_fuse(pyr, ws, mode)
                             : ad::hypercolumn_fuse(pyr, ws, mode);
          }};
}

Problem neck_problem(Rng& rng) {
  NeckConfig cfg;
  cfg.levels = 3;
  cfg.widths = {2, 2, 4};
  cfg.delta = 2;
  cfg.placement = Placement::a;
  cfg.attention = AttentionKind::cbam;
  cfg.spatial_kernel = 3;
  cfg.reduction = 2;
  auto params = std::make_shared<NeckParams>(NeckParams::random(cfg, rng));
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    const std::size_t side = std::size_t{1} << (cfg.levels - 1 - i);
    inputs.push_back(fm(rng, 1, cfg.widths[i], side, side));
  }
  for (const Tensor& m : params->projections) inputs.push_back(m);
  return {"placement a, cbam", std::move(inputs),
          [cfg, params](std::span<const Var> v) {
            Tape& tape = *v[0].tape();
            std::vector<DblVars> dbl;
            for (const auto& d : params->dbl) dbl.push_back(bind(tape, d));
            std::vector<AttentionVars> hooks;
            for (const auto& h : params->hooks) hooks.push_back(bind(tape, h));
            return ad::assemble_neck(v.subspan(0, cfg.levels), cfg, dbl,
                                     v.subspan(cfg.levels, cfg.levels), hooks);
          }};
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double check(const Problem& problem, Rng& rng, double step, double floor,
             double corrupt_scale) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : problem.inputs) vars.push_back(tape.input(t));
  Var out = problem.build(vars);
  Var weights = tape.input(rng.tensor(out.value().shape()));
  tape.seed(ad::sum(ad::mul(out, weights)));
  const Tensor w = weights.value();

  double worst = 0.0;
  std::vector<Tensor> probe = problem.inputs;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const Tensor analytic = grad(tape, vars[k]);
    for (std::size_t e = 0; e < probe[k].size(); ++e) {
      const double saved = probe[k][e];
      probe[k][e] = saved + step;
      const double plus = eval_loss(problem, probe, w);
      probe[k][e] = saved - step;
      const double minus = eval_loss(problem, probe, w);
      probe[k][e] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[e] * corrupt_scale, numeric, floor));
    }
  }
  return worst;
}

bool Report::passed() const {
  return std::all_of(cases.begin(), cases.end(),
                     [](const CaseResult& c) { return c.passed; });
}

std::size_t Report::configurations() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.configurations;
  return n;
}

std::vector<std::string> case_names() {
  return {"conv2d",           "pool_global_avg",    "pool_global_max",
          "pool_channel_avg", "pool_channel_max",   "dense_relu",
          "dense_none",       "upsample_nearest",   "upsample_bilinear",
          "broadcast_add",    "broadcast_mul",      "channel_attention",
          "spatial_attention", "cbam",              "se",
          "dbl",              "stairstep_nearest",  "stairstep_bilinear",
          "hypercolumn_bilinear", "neck"};
}

Problem make_problem(const std::string& name, Rng& rng) {
  if (name == "conv2d") return conv_problem(rng);
  if (name == "pool_global_avg") return pool_problem(rng, true, PoolMode::avg);
  if (name == "pool_global_max") return pool_problem(rng, true, PoolMode::max);
  if (name == "pool_channel_avg") return pool_problem(rng, false, PoolMode::avg);
  if (name == "pool_channel_max") return pool_problem(rng, false, PoolMode::max);
  if (name == "dense_relu") return dense_problem(rng, Activation::relu);
  if (name == "dense_none") return dense_problem(rng, Activation::none);
  if (name == "upsample_nearest") return upsample_problem(rng, UpsampleMode::nearest);
  if (name == "upsample_bilinear") return upsample_problem(rng, UpsampleMode::bilinear);
  if (name == "broadcast_add") return broadcast_problem(rng, BinaryOp::add);
  if (name == "broadcast_mul") return broadcast_problem(rng, BinaryOp::mul);
  if (name == "channel_attention") return channel_attention_problem(rng);
  if (name == "spatial_attention") return spatial_attention_problem(rng);
  if (name == "cbam") return cbam_problem(rng);
  if (name == "se") return se_problem(rng);
  if (name == "dbl") return dbl_problem(rng);
  if (name == "stairstep_nearest") return fusion_problem(rng, UpsampleMode::nearest, true);
  if (name == "stairstep_bilinear") return fusion_problem(rng, UpsampleMode::bilinear, true);
  if (name == "hypercolumn_bilinear") return fusion_problem(rng, UpsampleMode::bilinear, false);
  if (name == "neck") return neck_problem(rng);
  throw ValueError("gradcheck: unknown case '" + name + "'");
}

Report run(const Options& options) {
  if (options.trials == 0) throw ValueError("gradcheck: trials must be >= 1");
  const auto all = case_names();
  for (const auto& name : options.cases) {
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      throw ValueError("gradcheck: unknown case '" + name + "'");
    }
  }
  Report report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  for (const auto& name : all) {
    if (!options.cases.empty() &&
        std::find(options.cases.begin(), options.cases.end(), name) == options.cases.end()) {
      continue;
    }
    CaseResult result{name, options.trials, 0.0, false};
    const double scale = name == options.corrupt ? 1.0 + 1e-2 : 1.0;
    for (std::size_t t = 0; t < options.trials; ++t) {
      const Problem problem = make_problem(name, rng);
      result.max_rel_error = std::max(
          result.max_rel_error, check(problem, rng, options.step, options.floor, scale));
    }
    result.passed = result.max_rel_error < options.tolerance;
    report.cases.push_back(std::move(result));
  }
  return report;
}

}  // namespace myolo::gradcheck
