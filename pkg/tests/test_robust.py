import json

import numpy as np
import pytest
from scipy import linalg, stats

from bandinfo.errors import DimensionMismatch, ImageTooSmall, NotOrthonormal
from bandinfo.robust import (
    band_similarity,
    bootstrap_stability,
    estimate_noise,
    index_bands,
    spiked_data,
    subspace_similarity,
    textured_image,
)


def random_basis(rng, dim, d):
    q, _ = np.linalg.qr(rng.normal(size=(dim, d)))
    return q


# --- noise ----------------------------------------------------------------------------

def test_flat_image_noise_recovered():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        img = 7.0 + 2.0 * rng.normal(size=(256, 256, 1))
        assert abs(estimate_noise(img) - 4.0) < 0.4


def test_textured_image_noise_recovered():
    for seed in range(20):
        img, var = textured_image(seed=seed)
        assert abs(estimate_noise(img) - var) < 0.2 * var


def test_smooth_gradient_is_noise_free():
    yy, xx = np.mgrid[0:64, 0:64]
    assert estimate_noise(0.3 * xx - 0.2 * yy + 5.0) < 0.01


def test_noise_scale_property():
    rng = np.random.default_rng(1)
    img = rng.normal(size=(128, 128, 1))
    a, b = estimate_noise(img), estimate_noise(3.0 * img)
    assert abs(b / a - 9.0) < 0.05 * 9.0


def test_noise_too_small():
    with pytest.raises(ImageTooSmall):
        estimate_noise(np.zeros((5, 20)))


# --- similarity --------------------------------------------------------------------------

def test_same_subspace_is_one():
    rng = np.random.default_rng(0)
    v = random_basis(rng, 30, 6)
    q = random_basis(rng, 6, 6)
    assert abs(subspace_similarity(v, v) - 1.0) < 1e-9
    assert abs(subspace_similarity(v, v @ q) - 1.0) < 1e-9


def test_orthogonal_subspaces_are_zero():
    e = np.eye(10)
    assert subspace_similarity(e[:, :4], e[:, 4:8]) < 1e-9


def test_rotation_invariance():
    rng = np.random.default_rng(1)
    v1, v2 = random_basis(rng, 20, 5), random_basis(rng, 20, 5)
    q = random_basis(rng, 5, 5)
    assert abs(subspace_similarity(v1, v2) - subspace_similarity(v1 @ q, v2)) < 1e-9
    assert abs(subspace_similarity(v1, v2) - subspace_similarity(v1, v2 @ q)) < 1e-9


def test_random_subspaces_match_monte_carlo_oracle():
    dim, d = 40, 5
    # oracle: cosines of principal angles from scipy on an independent stream
    orng = np.random.default_rng(100)
    ref = []
    for _ in range(4000):
        a, b = orng.normal(size=(2, dim, d))
        cos = np.cos(linalg.subspace_angles(a, b))
        ref.append(np.sqrt(np.sum(cos ** 2) / d))
    mu, sd = np.mean(ref), np.std(ref)
    rng = np.random.default_rng(7)
    got = [subspace_similarity(random_basis(rng, dim, d), random_basis(rng, dim, d)) for _ in range(100)]
    assert abs(np.mean(got) - mu) < 3 * sd / np.sqrt(100)


def test_linear_normalization_flag():
    v = np.eye(9)[:, :4]
    assert abs(subspace_similarity(v, v, "linear") - 0.5) < 1e-12


def test_similarity_errors():
    with pytest.raises(NotOrthonormal):
        subspace_similarity(2 * np.eye(4)[:, :2], np.eye(4)[:, :2])
    with pytest.raises(DimensionMismatch):
        subspace_similarity(np.eye(4)[:, :2], np.eye(5)[:, :2])


# --- bootstrap -------------------------------------------------------------------------------

def test_identical_resamples_have_unit_diagonal():
    x = spiked_data(n=300, dim=20, seed=0)
    u = np.linalg.eigh(np.cov(x.T))[1]
    m = band_similarity(u, u, index_bands(20, 4))
    np.testing.assert_allclose(np.diag(m), 1.0, atol=1e-9)


def test_matrix_symmetric_and_bounded():
    m = bootstrap_stability(spiked_data(n=500, dim=20, seed=1), n=100, resamples=6, bands=4, seed=0)
    assert np.abs(m.values - m.values.T).max() < 1e-9
    assert m.values.min() >= 0 and m.values.max() <= 1
    assert json.loads(m.to_json())["schema"] == 1
    assert m.to_csv().splitlines()[0] == "band_i,band_j,similarity"


def test_spiked_head_more_stable():
    m = bootstrap_stability(spiked_data(seed=0), n=200, resamples=10, bands=10, seed=0)
    v = m.values
    assert v[0, 0] > v[-1, -1]
    assert v[0, 0] > v[0, 1:].max() and v[0, 0] > v[1:, 0].max()


def test_isotropic_bands_indistinguishable():
    diags = []
    for seed in range(10):
        x = np.random.default_rng(seed).normal(size=(100000, 30))
        diags.append(np.diag(bootstrap_stability(x, n=150, resamples=8, bands=5, seed=seed).values))
    assert stats.kruskal(*np.array(diags).T).pvalue > 0.01
