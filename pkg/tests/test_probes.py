import numpy as np
import pytest

from bandinfo.bands import BandSpec, fit_basis
from bandinfo.core import LabeledDataset
from bandinfo.errors import MetricTargetMismatch, SingularRidgeSystem
from bandinfo.probes import (
    ProbeConfig,
    aee,
    band_predictivity_sweep,
    band_sensitivity_sweep,
    depth_scenes,
    evaluate,
    mae,
    predict,
    split_dataset,
    train_probe,
    translating_texture,
)


def blobs(n=400, margin=5.0, seed=0, d=4):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(size=(n, d))
    x[:, 0] += margin * y
    return LabeledDataset(x.reshape(n, 1, d, 1), y)


def test_separable_blobs():
    tr, te = split_dataset(blobs(margin=12.0), 0.3, 0)
    for kind in ("logistic", "mlp"):
        model = train_probe(tr, ProbeConfig(kind=kind, epochs=50, lr=1e-2), seed=1)
        assert evaluate(model, te) == 1.0


def test_shuffled_labels_near_chance():
    ds = blobs(n=1000, seed=3)
    ds = LabeledDataset(ds.images, np.random.default_rng(9).permutation(ds.targets))
    tr, te = split_dataset(ds, 0.5, 0)
    acc = evaluate(train_probe(tr), te)
    assert abs(acc - 0.5) < 3 * np.sqrt(0.25 / len(te))


def test_ridge_exact_line():
    x = np.linspace(-2, 3, 30)
    ds = LabeledDataset(x.reshape(30, 1, 1, 1), (2 * x + 1).reshape(30, 1, 1, 1))
    w, b = train_probe(ds, ProbeConfig(kind="ridge", ridge=1e-9)).linear_coefficients()
    assert abs(w[0, 0] - 2) < 1e-6 and abs(b[0] - 1) < 1e-6


def test_ridge_singular():
    ds = LabeledDataset(np.ones((5, 1, 2, 1)) * np.arange(5)[:, None, None, None] * [[[[1], [1]]]],
                        np.zeros((5, 1, 1, 1)))
    with pytest.raises(SingularRidgeSystem):
        train_probe(ds, ProbeConfig(kind="ridge", ridge=0.0))


def test_training_is_bitwise_deterministic():
    tr, _ = split_dataset(blobs(), 0.3, 0)
    for kind in ("logistic", "mlp"):
        cfg = ProbeConfig(kind=kind, epochs=20)
        a, b = train_probe(tr, cfg, seed=5), train_probe(tr, cfg, seed=5)
        for key in a.weights:
            assert np.array_equal(a.weights[key], b.weights[key])


def test_normalization_uses_train_split_only():
    tr, te = split_dataset(blobs(), 0.3, 0)
    poisoned = LabeledDataset(te.images + 1e6, te.targets)
    model = train_probe(tr)
    np.testing.assert_array_equal(model.mean, tr.flat().mean(axis=0))
    evaluate(model, poisoned)
    np.testing.assert_array_equal(model.mean, tr.flat().mean(axis=0))
    assert np.all(model.mean < 100)


def test_empty_band_gives_majority_rate():
    rng = np.random.default_rng(0)
    y = (rng.random(300) < 0.7).astype(int)
    ds = LabeledDataset(rng.normal(size=(300, 4, 4, 1)) + y[:, None, None, None], y)
    rep = band_predictivity_sweep(ds, [BandSpec.range("pca", 3, 3)], seed=2)
    _, te = split_dataset(ds, 0.3, 2)
    assert rep.values()[0] == np.mean(te.targets == 1)


# --- metrics -----------------------------------------------------------------------

def test_metrics_trivial_cases():
    t = np.random.default_rng(0).normal(size=(3, 4, 4, 2))
    assert mae(t, t) == 0 and aee(t, t) == 0
    assert abs(aee(t + np.array([3.0, 4.0]), t) - 5.0) < 1e-12


def test_aee_matches_loop_oracle():
    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(2, 1, 4, 4, 2))
    valid = rng.random((1, 4, 4)) > 0.3
    acc, cnt = 0.0, 0
    for i in range(4):
        for j in range(4):
            if valid[0, i, j]:
                du, dv = p[0, i, j] - t[0, i, j]
                acc += (du * du + dv * dv) ** 0.5
                cnt += 1
    assert abs(aee(p, t, valid) - acc / cnt) < 1e-12


def test_mae_ignores_masked_pixels():
    t = np.zeros((1, 2, 2, 1))
    p = np.array([1.0, 100.0, 1.0, 1.0]).reshape(1, 2, 2, 1)
    valid = np.array([[[True, False], [True, True]]])
    assert mae(p, t, valid) == 1.0


def test_metric_target_mismatch():
    ds = blobs()
    model = train_probe(ds)
    with pytest.raises(MetricTargetMismatch):
        evaluate(model, ds, "mae")
    with pytest.raises(MetricTargetMismatch):
        aee(np.zeros((1, 2, 2, 1)), np.zeros((1, 2, 2, 1)))


# --- dense tasks and sweeps ----------------------------------------------------------

def test_depth_ridge_beats_mean_predictor():
    ds = depth_scenes(n=300, size=8, seed=0)
    tr, te = split_dataset(ds, 0.3, 0)
    model = train_probe(tr, ProbeConfig(kind="ridge", ridge=1.0))
    baseline = mae(np.broadcast_to(tr.targets.mean(axis=0), te.targets.shape), te.targets, te.valid)
    assert evaluate(model, te) < 0.5 * baseline


def test_flow_generator_and_aee():
    ds = translating_texture(n=60, size=8, seed=1)
    assert ds.targets.shape == (60, 8, 8, 2) and ds.valid.shape == (60, 8, 8)
    assert np.all(ds.targets[:, 0, 0] == ds.targets[:, 5, 3])
    rep = band_sensitivity_sweep(ds, [BandSpec.full("fourier")], ProbeConfig(kind="ridge", ridge=10.0), seed=0)
    metrics = [r.metric for r in rep.rows]
    assert metrics == ["aee", "aee_differential"]
    assert abs(rep.rows[1].value) < 1e-12


def test_sensitivity_full_band_equals_plain_evaluation():
    ds = blobs(n=300, margin=2.0)
    rep = band_sensitivity_sweep(ds, [BandSpec.full("pca")], seed=4)
    tr, te = split_dataset(ds, 0.3, 4)
    assert rep.values()[0] == evaluate(train_probe(tr, seed=4), te)


def test_sweep_csv_columns_and_basis_fit_on_train():
    ds = blobs(n=200, margin=3.0)
    specs = [BandSpec.full("pca"), BandSpec.low_pass("pca", 1), BandSpec.high_pass("pca", 1)]
    rep = band_predictivity_sweep(ds, specs, seed=0)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "band,metric,value,feature_count,power_fraction,seed"
    assert len(lines) == 4
    tr, _ = split_dataset(ds, 0.3, 0)
    expected = fit_basis("pca", tr)
    got = band_predictivity_sweep(ds, specs[1:2], seed=0, bases={"pca": expected})
    assert got.rows[0].value == rep.rows[1].value
    assert rep.rows[0].value >= max(rep.values()) - 3 * np.sqrt(0.25 / 60)
