import json
import math

import numpy as np
import pytest
from scipy import stats

from zsda.completion import CompletionConfig, ObservationMask, complete
from zsda.datagen import (
    DEFAULT_ROTATIONS, DEFAULT_TRANSLATIONS, DatasetFormatError, DatasetVersionError, DomainDataset,
    grid_transform_dataset, plant_model, planted_dataset, prototype_rasters, read_dataset,
    rotate_translate_points, rotate_translate_raster, sample_domain_data, write_dataset,
)
from zsda.model import ArchConfig
from zsda.tensor_core import DomainGrid


def test_plant_model_deterministic():
    g = DomainGrid((2, 3))
    a = plant_model(g, 6, 4, 1, 2, "logistic", 11)
    b = plant_model(g, 6, 4, 1, 2, "logistic", 11)
    for x, y in zip(a.factors.modes, b.factors.modes):
        assert np.array_equal(x, y)
    for x, y in zip(a.net.weights, b.net.weights):
        assert np.array_equal(x, y)
    c = plant_model(g, 6, 4, 1, 2, "logistic", 12)
    assert not np.array_equal(a.factors.modes[0], c.factors.modes[0])


@pytest.mark.parametrize("seed", range(5))
def test_planted_head_rms_is_one(seed):
    m = plant_model(DomainGrid((2, 3, 3, 2)), 8, 4, 1, 2, "logistic", seed)
    H = m.heads().values
    rms = math.sqrt(np.mean(np.sum(H * H, axis=1)))
    assert abs(rms - 1.0) <= 0.1


def test_planted_heads_have_rank_k():
    g = DomainGrid((3, 3, 2))
    m = plant_model(g, 5, 3, 1, 2, "gaussian", 4)
    res = complete(m.heads(), ObservationMask(g, tuple(range(g.D))), CompletionConfig(K=2, restarts=10, max_sweeps=2000))
    assert res.objective_l1 <= 1e-6


def test_plant_model_validation():
    g = DomainGrid((2,))
    with pytest.raises(ValueError):
        plant_model(g, 3, 2, 1, 1, "probit", 0)
    with pytest.raises(ValueError):
        plant_model(g, 3, 2, 1, 1, "softmax", 0)
    with pytest.raises(ValueError):
        plant_model(g, 0, 2, 1, 1, "gaussian", 0)


def test_gaussian_sigma_zero_is_exact():
    g = DomainGrid((2, 2))
    m = plant_model(g, 5, 3, 1, 2, "gaussian", 1)
    X, y = sample_domain_data(m, (1, 0), 50, 3)
    np.testing.assert_array_equal(y, m.logits(np.full(50, 2), X)[:, 0])


def test_bayes_accuracy_grows_with_head_scale():
    g = DomainGrid((2, 2))
    accs = []
    for hs in (1.0, 3.0, 9.0):
        m = plant_model(g, 8, 4, 1, 2, "logistic", 0, head_scale=hs)
        ds = planted_dataset(m, 5000, 1)
        b = ds.batch()
        z = m.logits(b.domains, b.X)[:, 0]
        accs.append(np.mean((z > 0) == (b.y == 1)))
    assert accs[0] > 0.5
    assert accs[0] < accs[1] < accs[2]


def test_softmax_labels_in_range():
    m = plant_model(DomainGrid((2,)), 4, 3, 4, 1, "softmax", 0, arch=ArchConfig(hidden=(), p=3, out_activation="tanh"))
    ds = planted_dataset(m, 300, 0)
    y = ds.batch().y
    assert ds.C == 4 and set(np.unique(y)) <= {0, 1, 2, 3}


def test_x_marginal_shared_across_domains():
    m = plant_model(DomainGrid((2, 2)), 4, 3, 1, 2, "logistic", 0, head_scale=5.0)
    Xa, _ = sample_domain_data(m, 0, 10_000, 1)
    Xb, _ = sample_domain_data(m, 3, 10_000, 2)
    assert stats.ks_2samp(Xa[:, 0], Xb[:, 0]).pvalue > 0.01


def test_planted_dataset_deterministic_and_subsettable():
    m = plant_model(DomainGrid((2, 3)), 4, 3, 1, 2, "logistic", 0)
    a = planted_dataset(m, 20, 5)
    assert a == planted_dataset(m, 20, 5)
    assert a != planted_dataset(m, 20, 6)
    sub = planted_dataset(m, 20, 5, domains=[1, 4])
    assert sub.domains() == [1, 4]
    assert np.array_equal(sub.data[4][0], a.data[4][0])
    assert a.restrict([1, 4]) == sub


# ---------------------------------------------------------------- grid transform analog

def test_default_transform_lists():
    assert list(DEFAULT_ROTATIONS) == [-30, -15, 0, 15, 30]
    assert [tuple(o) for o in DEFAULT_TRANSLATIONS] == [(-3, 0), (0, -3), (0, 0), (0, 3), (3, 0)]


def test_identity_transform():
    img = prototype_rasters(1, 16, np.random.default_rng(0))[0]
    np.testing.assert_allclose(rotate_translate_raster(img, 0.0, (0, 0)), img, atol=1e-12)
    pts = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_array_equal(rotate_translate_points(pts, 0.0, (0, 0)), pts)


def smooth_raster(rng, size=16, blobs=3):
    # features at least 3 px wide and inside the inscribed disc, so the round trip only sees interpolation error
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c0 = (size - 1) / 2
    out = np.zeros((size, size))
    for _ in range(blobs):
        cy, cx = rng.uniform(c0 - 2, c0 + 2, size=2)
        s = rng.uniform(3.0, 4.0)
        out += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    out *= np.exp(-((np.hypot(yy - c0, xx - c0) / (size / 3)) ** 4))  # smooth roll-off before the border
    return out / out.max()


def test_rotation_inverse():
    rng = np.random.default_rng(1)
    for a in [smooth_raster(rng) for _ in range(10)]:
        for th in (15.0, 30.0):
            back = rotate_translate_raster(rotate_translate_raster(a, th, (0, 0)), -th, (0, 0))
            assert np.mean(np.abs(back - a)) <= 1e-2
    pts = np.random.default_rng(2).normal(size=(8, 2))
    back = rotate_translate_points(rotate_translate_points(pts, 30.0, (0, 0)), -30.0, (0, 0))
    np.testing.assert_allclose(back, pts, rtol=0, atol=1e-12)


def test_translation_moves_mass():
    img = np.zeros((9, 9))
    img[4, 4] = 1.0
    out = rotate_translate_raster(img, 0.0, (2, -1))
    assert out[6, 3] == pytest.approx(1.0)


def test_rotation_direction_matches_point_transform():
    img = np.zeros((11, 11))
    img[5, 8] = 1.0  # (row, col) = centre + (0, 3)
    out = rotate_translate_raster(img, 90.0, (0, 0))
    r, c = np.unravel_index(np.argmax(out), out.shape)
    p = rotate_translate_points(np.array([[0.0, 3.0]]), 90.0, (0, 0))[0] + 5
    assert (r, c) == tuple(np.round(p).astype(int))


def test_grid_transform_dataset_shape_and_determinism():
    ds = grid_transform_dataset(n=8, seed=3)
    assert ds.grid.dims == (5, 5) and ds.C == 5 and ds.x_shape == (16, 16)
    assert all(ds.count(t) == 8 for t in range(25))
    assert ds == grid_transform_dataset(n=8, seed=3)
    pts = grid_transform_dataset(kind="points", n=4, seed=0, rotations=[0, 90], translations=[(0, 0)])
    assert pts.grid.dims == (2, 1) and pts.x_shape == (8, 2)


def test_grid_transform_identity_domain_matches_base_up_to_noise():
    base = prototype_rasters(2, 12, np.random.default_rng(0))
    ds = grid_transform_dataset(base, rotations=[0.0], translations=[(0, 0)], n=30, seed=1, noise=0.01, variation=0.0)
    X, y = ds.data[0]
    resid = X - base[y.astype(int)].reshape(30, -1)
    assert np.std(resid) < 0.02


def test_out_of_bounds_translation_is_clipped():
    with pytest.warns(RuntimeWarning, match="clipped"):
        ds = grid_transform_dataset(size=8, n=2, rotations=[0], translations=[(0, 20)], C=2)
    assert ds.provenance["clipped"] is True
    assert ds.provenance["translations"] == [[0.0, 7.0]]


def test_grid_transform_validation():
    with pytest.raises(ValueError):
        grid_transform_dataset(rotations=[], n=2)
    with pytest.raises(ValueError):
        grid_transform_dataset(prototype_rasters(1, 8, np.random.default_rng(0)), n=2)


def test_external_rasters_accepted():
    rng = np.random.default_rng(0)
    imgs = rng.random((10, 8, 8))
    labels = np.arange(10) % 3
    ds = grid_transform_dataset((imgs, labels), rotations=[0], translations=[(0, 0)], n=5, noise=0.0)
    assert ds.C == 3
    X, y = ds.data[0]
    for x, lab in zip(X, y):
        assert any(np.allclose(x, imgs[i].ravel()) for i in np.flatnonzero(labels == lab))


# ---------------------------------------------------------------- file IO

def test_round_trip(tmp_path):
    m = plant_model(DomainGrid((2, 2)), 3, 2, 1, 1, "gaussian", 0, sigma=0.3)
    ds = planted_dataset(m, 7, 1)
    ds.data[0][0][0, 0] = 1 / 3
    write_dataset(tmp_path / "d.jsonl", ds)
    assert read_dataset(tmp_path / "d.jsonl") == ds
    cls = grid_transform_dataset(n=3, seed=0, size=8, C=2)
    write_dataset(tmp_path / "c.jsonl", cls)
    back = read_dataset(tmp_path / "c.jsonl")
    assert back == cls and back.x_shape == (8, 8)


def test_empty_dataset_round_trip(tmp_path):
    ds = DomainDataset(DomainGrid((2, 2)), {}, 2, 0, (3,), {}, partial=True)
    write_dataset(tmp_path / "e.jsonl", ds)
    back = read_dataset(tmp_path / "e.jsonl")
    assert back == ds and back.domains() == []


def test_hand_written_fixture(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"version": 1, "dims": [2, 2], "r": 2, "C": 2, "n": 1, "provenance": {"by": "hand"}, "future": 7}\n'
                 '{"t": 0, "x": [0.5, -1.0], "y": 1}\n'
                 '{"t": 3, "x": [2.0, 0.25], "y": 0}\n')
    ds = read_dataset(p)
    assert ds.grid.dims == (2, 2) and ds.x_shape == (2,) and ds.C == 2 and ds.n == 1
    assert ds.provenance == {"by": "hand"}
    assert ds.domains() == [0, 3]
    np.testing.assert_array_equal(ds.data[0][0], [[0.5, -1.0]])
    np.testing.assert_array_equal(ds.data[3][1], [0.0])


def test_malformed_line_is_named(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"version": 1, "dims": [2], "r": 1, "C": 2, "n": 1}\n{"t": 0, "x": [1.0], "y": 0}\n{"t": 1, "x": [1.0\n')
    with pytest.raises(DatasetFormatError, match="line 3"):
        read_dataset(p)
    p.write_text('{"version": 1, "dims": [2], "r": 1, "C": 2, "n": 1}\n{"t": 5, "x": [1.0], "y": 0}\n')
    with pytest.raises(DatasetFormatError, match="line 2"):
        read_dataset(p)
    p.write_text("not json\n")
    with pytest.raises(DatasetFormatError, match="line 1"):
        read_dataset(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "v.jsonl"
    p.write_text(json.dumps({"version": 2, "dims": [2], "r": 1, "C": 2, "n": 0}) + "\n")
    with pytest.raises(DatasetVersionError, match="version"):
        read_dataset(p)
