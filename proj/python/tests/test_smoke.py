import numpy as np
import pytest

import myolo


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_conv2d_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 6, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    y = myolo.conv2d(x, k, b, stride=1, pad=1)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 6, 5))
    for o in range(3):
        for i in range(6):
            for j in range(5):
                ref[0, o, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3] * k[o]) + b[o]
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_pooling_and_upsample():
    x = np.arange(24, dtype=float).reshape(1, 2, 3, 4)
    np.testing.assert_allclose(myolo.pool_global(x, myolo.PoolMode.avg)[..., 0, 0], x.mean(axis=(2, 3)))
    np.testing.assert_allclose(myolo.pool_channelwise(x, myolo.PoolMode.max)[:, 0], x.max(axis=1))
    up = myolo.upsample(x, 2, myolo.UpsampleMode.nearest)
    np.testing.assert_array_equal(up, x.repeat(2, axis=2).repeat(2, axis=3))


def test_cbam_gates_shrink_the_input():
    rng = np.random.default_rng(1)
    f = rng.standard_normal((2, 8, 5, 5))
    w0 = rng.standard_normal((2, 8))
    w1 = rng.standard_normal((8, 2))
    kernel = rng.standard_normal((1, 2, 7, 7))
    gate = myolo.channel_attention(f, w0, w1)
    assert gate.shape == (2, 8, 1, 1)
    mlp = lambda v: w1 @ np.maximum(w0 @ v, 0.0)
    ref = sigmoid(mlp(f[0].mean(axis=(1, 2))) + mlp(f[0].max(axis=(1, 2))))
    np.testing.assert_allclose(gate[0, :, 0, 0], ref, atol=1e-12)
    y = myolo.cbam(f, w0, w1, kernel, 0.1)
    assert y.shape == f.shape
    assert np.all(np.abs(y) <= np.abs(f))
    zero = np.zeros_like(w0), np.zeros_like(w1)
    np.testing.assert_allclose(myolo.se(f, *zero), 0.5 * f)


def test_stairstep_equals_hypercolumn_with_nearest():
    rng = np.random.default_rng(2)
    pyramid = [rng.standard_normal((1, 3, 8 >> i, 8 >> i)) for i in range(3)]
    weights = [rng.standard_normal((4, 3, 1, 1)) for _ in range(3)]
    a = myolo.stairstep_fuse(pyramid, weights)
    b = myolo.hypercolumn_fuse(pyramid, weights)
    assert a.shape == (1, 4, 8, 8)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_neck_runs_from_random_params():
    config = "levels = 3\nwidths = 4,8,16\ndelta = 6\nplacement = b\nattention = se\n"
    params = myolo.random_neck_params(config, seed=3)
    rng = np.random.default_rng(3)
    pyramid = [rng.standard_normal((2, w, 16 >> i, 16 >> i)) for i, w in enumerate((4, 8, 16))]
    out = myolo.assemble_neck(pyramid, config, params)
    assert out.shape == (2, 6, 16, 16)
    assert np.all(np.isfinite(out))


def test_polygon_round_trip():
    yy, xx = np.mgrid[:128, :128]
    mask = (xx + 0.5 - 64) ** 2 / 40**2 + (yy + 0.5 - 60) ** 2 / 25**2 <= 1
    poly = myolo.encode_mask(mask, 36)
    assert len(poly.vertices) == 36
    kept = myolo.decode_vertices(poly, 0.5)
    assert [v.angle_bin for v in kept.vertices] == list(range(36))
    assert kept.threshold == 0.5
    back = myolo.rasterize(poly, 128, 128)
    assert back.dtype == bool and back.shape == mask.shape
    assert myolo.iou(mask, back) > 0.9
    assert myolo.PolygonDetection.parse(poly.label(), 36).vertices[0].angle_bin == 0


def test_metrics_identities():
    gt = np.zeros((16, 16), dtype=bool)
    gt[4:12, 3:9] = True
    pred = gt.astype(float)
    scores = myolo.evaluate(pred, gt)
    assert scores["mae"] == 0.0
    assert scores["f_beta"] == pytest.approx(1.0, abs=1e-12)
    assert scores["e_measure"] == pytest.approx(1.0, abs=1e-12)
    assert scores["s_measure"] == pytest.approx(1.0, abs=1e-9)
    assert myolo.f_beta(pred, np.zeros_like(gt)) is None
    assert myolo.ssim(pred, pred) == pytest.approx(1.0, abs=1e-12)
    mean, pairs = myolo.dataset_similarity([pred, pred, pred], pairs=0)
    assert pairs == 3 and mean == pytest.approx(1.0, abs=1e-12)


def test_fmap_round_trip(tmp_path):
    x = np.linspace(-1, 1, 24).reshape(1, 2, 3, 4)
    path = tmp_path / "x.fmap"
    myolo.write_fmap(path, x)
    np.testing.assert_allclose(myolo.read_fmap(path), x.astype(np.float32))


def test_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        myolo.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        myolo.ssim(np.zeros((5, 5)), np.zeros((5, 5)))


def test_gradcheck_passes():
    results = myolo.gradcheck(trials=1, cases=["cbam", "stairstep_nearest"])
    assert [r["name"] for r in results] == ["cbam", "stairstep_nearest"]
    assert all(r["passed"] for r in results)
