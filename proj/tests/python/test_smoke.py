import numpy as np
import pytest

import fpci

TOY = {
    "points": 32,
    "divisors": [1, 4, 32],
    "channels": [6, 8, 10],
    "attn_dim": 8,
    "knn_k": 4,
    "cost_channels": 6,
    "predictor_width": 8,
    "refine_channels": 4,
    "refine_pt_k": 4,
    "fusion_k": 4,
}


def rand_cloud(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 3)) * scale


def test_chamfer_matches_numpy():
    x, y = rand_cloud(40, 1), rand_cloud(56, 2)
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    expected = d.min(axis=1).mean() + d.min(axis=0).mean()
    assert fpci.chamfer(x, y) == pytest.approx(expected, rel=1e-12)
    assert fpci.chamfer(x, x) == 0.0


def test_emd_translation_oracle():
    x = rand_cloud(48, 3)
    shift = np.array([0.7, -0.2, 0.4])
    # under a rigid translation the optimal bijection is the identity
    assert fpci.emd(x, x + shift) == pytest.approx(np.linalg.norm(shift), rel=1e-9)
    assert fpci.emd_exact(x, x) == pytest.approx(0.0, abs=1e-15)


def test_fps_prefix_and_spread():
    x = rand_cloud(100, 4)
    idx = fpci.fps(x, 10, start_index=7)
    assert idx[0] == 7
    assert len(np.unique(idx)) == 10
    # every selected pair is farther apart than the tightest original pair
    d = np.linalg.norm(x[idx][:, None] - x[idx][None, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    full = np.linalg.norm(x[:, None] - x[None, :], axis=-1)
    np.fill_diagonal(full, np.inf)
    assert d.min() >= full.min()


def test_knn_self_and_order():
    x = rand_cloud(30, 5)
    idx, dist = fpci.knn(x, x, 4)
    assert idx.shape == (30, 4) and dist.shape == (30, 4)
    assert (idx[:, 0] == np.arange(30)).all()
    assert (dist[:, 0] == 0.0).all()
    assert (np.diff(dist, axis=1) >= 0).all()


def test_warp_is_affine_in_t():
    x, f = rand_cloud(25, 6), rand_cloud(25, 7, scale=0.3)
    w = fpci.warp(x, f, 0.5)
    np.testing.assert_allclose(w, x + 0.5 * f, rtol=0, atol=1e-15)
    back = fpci.warp(x, f, 1.0, direction="backward")
    np.testing.assert_array_equal(back, x)


def test_generate_sequence_shapes():
    seq = fpci.generate_sequence(seed=9, points=64)
    assert seq["times"] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert len(seq["frames"]) == 5
    for f in seq["frames"]:
        assert f.shape == (64, 3)
        assert np.isfinite(f).all()


def test_engine_roundtrip(tmp_path):
    eng = fpci.make_engine(TOY, seed=3)
    assert eng.points == 32
    assert eng.param_count > 0

    seq = fpci.generate_sequence(seed=11, points=32)
    mid = eng.interpolate(seq["frames"][0], seq["frames"][4], t=0.5, fuse_seed=1)
    assert mid.shape == (32, 3)
    assert np.isfinite(mid).all()

    path = str(tmp_path / "eng.fpci")
    eng.save(path)
    other = fpci.make_engine(TOY, seed=99)
    other.load(path)
    again = other.interpolate(seq["frames"][0], seq["frames"][4], t=0.5, fuse_seed=1)
    np.testing.assert_array_equal(mid, again)

    with pytest.raises(ValueError):
        eng.interpolate(seq["frames"][0], seq["frames"][4], t=1.5)


def test_interpolation_beats_endpoints_after_identity():
    # even untrained, the fused output must stay in the scene's envelope
    eng = fpci.make_engine(TOY, seed=3)
    seq = fpci.generate_sequence(seed=21, points=32)
    mid = eng.interpolate(seq["frames"][0], seq["frames"][4], t=0.5)
    gt = seq["frames"][2]
    assert fpci.chamfer(mid, gt) < 10 * fpci.chamfer(seq["frames"][0], seq["frames"][4])
