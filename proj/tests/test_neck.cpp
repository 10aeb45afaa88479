#include <doctest.h>

#include <string>

#include "corpus.hpp"
#include "myolo/neck.hpp"
#include "oracles.hpp"

using namespace myolo;

namespace {

Tensor identity_kernel(std::size_t c) {
  Tensor k({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) k[i * c + i] = 1.0;
  return k;
}

NeckConfig small_config(Placement placement, AttentionKind kind) {
  NeckConfig cfg;
  cfg.levels = 3;
  cfg.widths = {4, 6, 8};
  cfg.delta = 4;
  cfg.placement = placement;
  cfg.attention = kind;
  cfg.reduction = 2;
  cfg.spatial_kernel = 3;
  return cfg;
}

std::vector<Tensor> project_all(std::span<const FeatureMap> levels, const NeckParams& p) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < levels.size(); ++i) out.push_back(dbl(levels[i], p.dbl[i]));
  return out;
}

FeatureMap scale(const FeatureMap& f, double s) {
  FeatureMap r = f;
  for (double& v : r.data()) v *= s;
  return r;
}

/// Sum of per-level projections upsampled straight to the finest grid.
FeatureMap hypercolumn_by_loops(std::span<const FeatureMap> levels, std::span<const Tensor> w) {
  FeatureMap acc;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    FeatureMap m = oracle::conv2d(levels[i], w[i], Tensor(), 1, 0);
    if (i > 0) m = oracle::upsample_nearest(m, std::size_t{1} << i);
    acc = i == 0 ? m : oracle::broadcast(acc, m, false);
  }
  return acc;
}

}  // namespace

TEST_SUITE("dbl") {
  TEST_CASE("leaky slope on a negative input") {
    const FeatureMap y = dbl(FeatureMap({1, 1, 1, 1}, {-1.0}), DblParams::identity(1));
    // eps = 1e-5 inside the square root perturbs the exact -0.1 slightly.
    CHECK(y[0] == doctest::Approx(-0.1).epsilon(1e-5));
  }

  TEST_CASE("running mean is removed") {
    DblParams p = DblParams::identity(1);
    p.running_mean = Tensor({1}, {4.0});
    CHECK(dbl(FeatureMap({1, 1, 1, 1}, {4.0}), p)[0] == 0.0);
  }

  TEST_CASE("matches conv, batch-norm and leaky relu composed") {
    Rng rng(1);
    for (std::size_t k : {1u, 3u}) {
      const FeatureMap x = rng.tensor({2, 3, 4, 4});
      const DblParams p = DblParams::random(3, 5, k, rng);
      const Tensor conv = oracle::conv2d(x, p.kernel, Tensor(), 1, (k - 1) / 2);
      const Tensor bn = ops::batch_norm(conv, p.gamma, p.beta, p.running_mean, p.running_var, p.eps);
      CHECK(max_abs_diff(dbl(x, p), ops::leaky_relu(bn, p.leaky_slope)) <= 1e-13);
    }
  }

  TEST_CASE("invalid statistics") {
    DblParams p = DblParams::identity(2);
    p.eps = 0.0;
    CHECK_THROWS(p.validate());
    p = DblParams::identity(2);
    p.running_var[1] = -1.0;
    CHECK_THROWS(p.validate());
    CHECK_THROWS_AS(dbl(FeatureMap({1, 3, 2, 2}), DblParams::identity(2)), ShapeError);
  }
}

TEST_SUITE("projection") {
  TEST_CASE("averaging weights") {
    const FeatureMap x({1, 2, 1, 1}, {2, 4});
    CHECK(project_m(x, Tensor({1, 2, 1, 1}, {0.5, 0.5}))[0] == 3.0);
  }

  TEST_CASE("identity kernel leaves x unchanged") {
    Rng rng(2);
    const FeatureMap x = rng.tensor({1, 3, 4, 4});
    CHECK(project_m(x, identity_kernel(3)) == x);
  }

  TEST_CASE("random weights match the conv oracle") {
    Rng rng(3);
    const FeatureMap x = rng.tensor({2, 5, 3, 3});
    const Tensor w = rng.tensor({4, 5, 1, 1});
    const FeatureMap y = project_m(x, w);
    CHECK(y.shape() == Shape{2, 4, 3, 3});
    CHECK(max_abs_diff(y, oracle::conv2d(x, w, Tensor(), 1, 0)) <= 1e-13);
    CHECK_THROWS_AS(project_m(x, rng.tensor({4, 5, 3, 3})), ShapeError);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("two all-ones levels with identity m") {
    const std::vector<FeatureMap> p{FeatureMap({1, 1, 2, 2}, 1.0), FeatureMap({1, 1, 1, 1}, 1.0)};
    const std::vector<Tensor> w{identity_kernel(1), identity_kernel(1)};
    CHECK(hypercolumn_fuse(p, w, UpsampleMode::nearest) == FeatureMap({1, 1, 2, 2}, 2.0));
    CHECK(stairstep_fuse(p, w, UpsampleMode::nearest) == FeatureMap({1, 1, 2, 2}, 2.0));
  }

  TEST_CASE("single level reduces to the projection") {
    Rng rng(4);
    const std::vector<FeatureMap> p{rng.tensor({1, 3, 4, 4})};
    const std::vector<Tensor> w{rng.tensor({2, 3, 1, 1})};
    CHECK(hypercolumn_fuse(p, w, UpsampleMode::bilinear) == project_m(p[0], w[0]));
    CHECK(stairstep_fuse(p, w, UpsampleMode::bilinear) == project_m(p[0], w[0]));
  }

  TEST_CASE("three-level hypercolumn matches the loop oracle") {
    Rng rng(5);
    const auto p = corpus::pyramid(rng, 2, {3, 4, 5}, 8, 8);
    const std::vector<Tensor> w{rng.tensor({4, 3, 1, 1}), rng.tensor({4, 4, 1, 1}),
                                rng.tensor({4, 5, 1, 1})};
    const FeatureMap y = hypercolumn_fuse(p, w, UpsampleMode::nearest);
    CHECK(y.shape() == Shape{2, 4, 8, 8});
    CHECK(max_abs_diff(y, hypercolumn_by_loops(p, w)) <= 1e-12);
  }

  TEST_CASE("stairstep equals hypercolumn with nearest upsampling") {
    Rng rng(6);
    for (std::size_t levels = 2; levels <= 4; ++levels) {
      std::vector<std::size_t> widths;
      std::vector<Tensor> w;
      for (std::size_t i = 0; i < levels; ++i) {
        widths.push_back(1 + rng.below(4));
        w.push_back(rng.tensor({3, widths.back(), 1, 1}));
      }
      const auto p = corpus::pyramid(rng, 1, widths, 16, 8);
      CHECK(max_abs_diff(stairstep_fuse(p, w, UpsampleMode::nearest),
                         hypercolumn_fuse(p, w, UpsampleMode::nearest)) <= 1e-9);
    }
  }

  TEST_CASE("bilinear stairstep and hypercolumn differ") {
    Rng rng(7);
    const auto p = corpus::pyramid(rng, 1, {2, 2, 2}, 8, 8);
    const std::vector<Tensor> w(3, rng.tensor({2, 2, 1, 1}));
    CHECK(max_abs_diff(stairstep_fuse(p, w, UpsampleMode::bilinear),
                       hypercolumn_fuse(p, w, UpsampleMode::bilinear)) > 1e-3);
  }

  TEST_CASE("pyramid violations name the offending dims") {
    const std::vector<FeatureMap> p{FeatureMap({1, 2, 8, 8}), FeatureMap({1, 2, 3, 4})};
    const std::vector<Tensor> w(2, Tensor({1, 2, 1, 1}));
    try {
      stairstep_fuse(p, w, UpsampleMode::nearest);
      FAIL("expected a ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(1,2,8,8)") != std::string::npos);
      CHECK(msg.find("(1,2,3,4)") != std::string::npos);
    }
    const std::vector<FeatureMap> batch{FeatureMap({2, 2, 4, 4}), FeatureMap({1, 2, 2, 2})};
    CHECK_THROWS_AS(validate_pyramid(batch), ShapeError);
  }
}

TEST_SUITE("neck") {
  TEST_CASE("config text round trip and validation") {
    NeckConfig cfg = small_config(Placement::c, AttentionKind::se);
    cfg.upsample = UpsampleMode::bilinear;
    const NeckConfig back = NeckConfig::parse(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.widths == cfg.widths);
    CHECK(back.placement == Placement::c);
    CHECK_THROWS_AS(NeckConfig::parse("colour=blue\n"), FormatError);
    CHECK_THROWS_AS(NeckConfig::parse("levels=2\n"), FormatError);  // widths missing
    CHECK_THROWS(NeckConfig::parse("levels=2\nwidths=4,4\ndelta=0\n").validate());
    CHECK_THROWS_AS(parse_placement("e"), ValueError);
    const NeckConfig parsed = NeckConfig::parse("# tiny\nlevels = 2\nwidths = 3, 5\ndelta=2\nplacement=d\n");
    CHECK(parsed.widths == std::vector<std::size_t>{3, 5});
    CHECK(parsed.placement == Placement::d);
  }

  TEST_CASE("hook widths per placement") {
    CHECK(small_config(Placement::a, AttentionKind::cbam).hook_widths() == std::vector<std::size_t>{4, 4});
    CHECK(small_config(Placement::b, AttentionKind::cbam).hook_widths() == std::vector<std::size_t>{4, 6, 8});
    CHECK(small_config(Placement::c, AttentionKind::se).hook_widths() == std::vector<std::size_t>{4, 6, 8});
    CHECK(small_config(Placement::d, AttentionKind::se).hook_widths() == std::vector<std::size_t>{4});
    CHECK(small_config(Placement::d, AttentionKind::none).hook_widths().empty());
  }

  TEST_CASE("without attention the neck is DBL then stairstep") {
    Rng rng(8);
    const NeckConfig cfg = small_config(Placement::a, AttentionKind::none);
    const auto params = NeckParams::random(cfg, rng);
    const auto p = corpus::pyramid(rng, 2, cfg.widths, 8, 8);
    const auto dbls = project_all(p, params);
    const FeatureMap expect = stairstep_fuse(dbls, params.projections, UpsampleMode::nearest);
    const FeatureMap y = assemble_neck(p, cfg, params);
    CHECK(y.shape() == Shape{2, 4, 8, 8});
    CHECK(y == expect);
  }

  TEST_CASE("zero CBAM hooks scale by one quarter per gate pair") {
    Rng rng(9);
    const auto p = corpus::pyramid(rng, 1, {4, 6, 8}, 8, 8);
    const NeckConfig none = small_config(Placement::a, AttentionKind::none);
    const auto base_params = NeckParams::random(none, rng);
    const auto dbls = project_all(p, base_params);
    std::vector<FeatureMap> m;
    for (std::size_t i = 0; i < 3; ++i) m.push_back(project_m(dbls[i], base_params.projections[i]));
    auto up = [](const FeatureMap& x) { return ops::upsample(x, 2, UpsampleMode::nearest); };
    auto add = [](const FeatureMap& a, const FeatureMap& b) { return ops::elementwise(a, b, BinaryOp::add); };

    auto with_zero_hooks = [&](Placement placement) {
      NeckConfig cfg = small_config(placement, AttentionKind::cbam);
      NeckParams params = base_params;
      for (std::size_t w : cfg.hook_widths()) {
        params.hooks.push_back(AttentionBlock::zeros(cfg.attention, w, cfg.reduction, cfg.spatial_kernel));
      }
      return assemble_neck(p, cfg, params);
    };

    // (a): each addition is gated.
    const FeatureMap a_expect = scale(add(up(scale(add(up(m[2]), m[1]), 0.25)), m[0]), 0.25);
    CHECK(max_abs_diff(with_zero_hooks(Placement::a), a_expect) <= 1e-12);
    // (b) and (d): everything downstream is linear.
    const FeatureMap plain = assemble_neck(p, none, base_params);
    CHECK(max_abs_diff(with_zero_hooks(Placement::b), scale(plain, 0.25)) <= 1e-12);
    CHECK(max_abs_diff(with_zero_hooks(Placement::d), scale(plain, 0.25)) <= 1e-12);
    // (c): the gate acts before the nonlinear DBL.
    std::vector<FeatureMap> quartered;
    for (const auto& f : p) quartered.push_back(scale(f, 0.25));
    CHECK(max_abs_diff(with_zero_hooks(Placement::c), assemble_neck(quartered, none, base_params)) <= 1e-12);
  }

  TEST_CASE("zero SE at placement d halves the output") {
    Rng rng(10);
    const auto p = corpus::pyramid(rng, 1, {4, 6, 8}, 4, 4);
    NeckConfig cfg = small_config(Placement::d, AttentionKind::se);
    const NeckParams params = NeckParams::random_with_zero_attention(cfg, rng);
    NeckParams plain = params;
    plain.hooks.clear();
    const FeatureMap expect = assemble_neck(p, small_config(Placement::d, AttentionKind::none), plain);
    CHECK(max_abs_diff(assemble_neck(p, cfg, params), scale(expect, 0.5)) <= 1e-12);
  }

  TEST_CASE("placements a and d differ on random input") {
    Rng rng(11);
    const auto p = corpus::pyramid(rng, 1, {4, 6, 8}, 8, 8);
    Rng pa(5), pd(5);
    const auto ya = assemble_neck(p, small_config(Placement::a, AttentionKind::cbam),
                                  NeckParams::random(small_config(Placement::a, AttentionKind::cbam), pa));
    const auto yd = assemble_neck(p, small_config(Placement::d, AttentionKind::cbam),
                                  NeckParams::random(small_config(Placement::d, AttentionKind::cbam), pd));
    CHECK(max_abs_diff(ya, yd) > 1e-6);
  }

  TEST_CASE("deterministic and batch-separable") {
    Rng rng(12);
    const NeckConfig cfg = small_config(Placement::b, AttentionKind::cbam);
    const auto params = NeckParams::random(cfg, rng);
    const auto p = corpus::pyramid(rng, 3, cfg.widths, 8, 8);
    const FeatureMap y = assemble_neck(p, cfg, params);
    CHECK(y == assemble_neck(p, cfg, params));
    std::vector<FeatureMap> parts;
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<FeatureMap> one;
      for (const auto& f : p) one.push_back(slice_batch(f, s));
      parts.push_back(assemble_neck(one, cfg, params));
    }
    CHECK(concat_batch(parts) == y);
  }

  TEST_CASE("parameters survive a tensor-map round trip") {
    Rng rng(13);
    for (AttentionKind kind : {AttentionKind::cbam, AttentionKind::se, AttentionKind::none}) {
      const NeckConfig cfg = small_config(Placement::a, kind);
      const auto params = NeckParams::random(cfg, rng);
      const auto back = NeckParams::from_tensors(cfg, params.to_tensors());
      const auto p = corpus::pyramid(rng, 1, cfg.widths, 4, 4);
      CHECK(assemble_neck(p, cfg, back) == assemble_neck(p, cfg, params));
    }
    const NeckConfig cfg = small_config(Placement::a, AttentionKind::cbam);
    auto tensors = NeckParams::random(cfg, rng).to_tensors();
    tensors.erase("m0");
    CHECK_THROWS(NeckParams::from_tensors(cfg, tensors));
  }

  TEST_CASE("mismatched parameters are rejected") {
    Rng rng(14);
    const NeckConfig cfg = small_config(Placement::a, AttentionKind::cbam);
    auto params = NeckParams::random(cfg, rng);
    params.hooks.pop_back();
    const auto p = corpus::pyramid(rng, 1, cfg.widths, 4, 4);
    CHECK_THROWS_AS(assemble_neck(p, cfg, params), ShapeError);
    const auto wrong = corpus::pyramid(rng, 1, {4, 6, 9}, 4, 4);
    CHECK_THROWS_AS(assemble_neck(wrong, cfg, NeckParams::random(cfg, rng)), ShapeError);
  }
}
