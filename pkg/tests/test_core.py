import math
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bandinfo.core import (
    CovarianceSpectrum,
    LabeledDataset,
    TensorImage,
    condition_number,
    explained_variance,
    fit_pca,
    read_tensor,
    write_tensor,
)
from bandinfo import errors


def _spectrum(eigs):
    eigs = np.asarray(eigs, dtype=float)
    return CovarianceSpectrum(np.zeros(len(eigs)), eigs, np.eye(len(eigs)))


def test_identical_points_have_zero_spectrum():
    x = np.tile([1.0, -2.0, 3.0], (6, 1))
    spec = fit_pca(x)
    assert np.all(spec.eigenvalues == 0)
    np.testing.assert_array_equal(spec.mean, [1.0, -2.0, 3.0])


def test_axis_aligned_pair():
    spec = fit_pca(np.array([[2.0, 0.0], [-2.0, 0.0]]))
    np.testing.assert_allclose(spec.eigenvalues, [4.0, 0.0], atol=1e-12)
    assert abs(abs(spec.eigenvectors[0, 0]) - 1.0) < 1e-12


def test_pca_matches_svd_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(20, 5)) @ rng.normal(size=(5, 5))
    spec = fit_pca(x)
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    np.testing.assert_allclose(spec.eigenvalues, s ** 2 / 20, rtol=1e-8, atol=1e-12)
    for k in range(5):
        dot = abs(spec.eigenvectors[:, k] @ vt[k])
        assert abs(dot - 1.0) < 1e-8


def test_pca_reconstruction_and_trace():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 12)) * np.linspace(3, 0.1, 12)
    spec = fit_pca(x)
    xc = x - x.mean(axis=0)
    sigma = xc.T @ xc / len(x)
    rel = np.linalg.norm(sigma - spec.covariance()) / np.linalg.norm(sigma)
    assert rel < 1e-8
    assert abs(spec.eigenvalues.sum() - np.trace(sigma)) / np.trace(sigma) < 1e-8
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    gram = spec.eigenvectors.T @ spec.eigenvectors
    assert np.abs(gram - np.eye(12)).max() < 1e-8


def test_pca_guards():
    with pytest.raises(errors.EmptyDataset):
        fit_pca(np.zeros((0, 3)))
    with pytest.raises(errors.DimensionTooLarge):
        fit_pca(np.zeros((2, 20)), max_dim=10)


def test_explained_variance():
    spec = _spectrum([3.0, 1.0])
    assert explained_variance(spec, 1) == 0.75
    assert explained_variance(spec, 2) == 1.0
    with pytest.raises(errors.IndexOutOfRange):
        explained_variance(spec, 3)
    with pytest.raises(errors.IndexOutOfRange):
        explained_variance(spec, 0)
    with pytest.warns(RuntimeWarning):
        assert explained_variance(_spectrum([0.0, 0.0]), 1) == 0.0


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 1e6)))
def test_explained_variance_monotone(eigs):
    eigs = np.sort(eigs)[::-1]
    spec = _spectrum(eigs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        vals = [explained_variance(spec, i) for i in range(1, len(eigs) + 1)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    if eigs.sum() > 0:
        assert vals[-1] == 1.0


def test_condition_number():
    assert condition_number(_spectrum([1, 1, 1])) == 1.0
    assert condition_number(_spectrum([1e6, 1])) == 1e6
    assert condition_number(_spectrum([5, 0])) == math.inf
    with pytest.raises(errors.AllZeroSpectrum):
        condition_number(_spectrum([0, 0]))


def test_tensor_round_trip(tmp_path):
    img = TensorImage(np.arange(9.0).reshape(3, 3, 1) / 7)
    write_tensor(tmp_path / "a.srt", img)
    back = read_tensor(tmp_path / "a.srt")
    assert back.data.tobytes() == img.data.tobytes()


@settings(max_examples=30)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_tensor_round_trip_bit_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("t") / "x.srt"
    write_tensor(path, TensorImage(data))
    assert read_tensor(path).data.tobytes() == np.ascontiguousarray(data).tobytes()


def test_tensor_layout(tmp_path):
    write_tensor(tmp_path / "a.srt", np.ones((2, 3, 1)))
    raw = (tmp_path / "a.srt").read_bytes()
    assert raw[:4] == b"SRT1" and raw[4] == 3
    assert struct.unpack("<3I", raw[5:17]) == (2, 3, 1)
    assert raw[17] == 1 and len(raw) == 18 + 6 * 8


def test_tensor_errors(tmp_path):
    p = tmp_path / "bad.srt"
    p.write_bytes(b"XXXX\x01\x02\x00\x00\x00\x01" + b"\x00" * 16)
    with pytest.raises(errors.BadMagic):
        read_tensor(p)
    write_tensor(p, np.ones((3, 3, 1)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(errors.TruncatedPayload):
        read_tensor(p)
    p.write_bytes(b"SRT1\x01\x02\x00\x00\x00\x07" + b"\x00" * 16)
    with pytest.raises(errors.UnsupportedDtype):
        read_tensor(p)


def test_tensor_image_rejects_nonfinite():
    with pytest.raises(errors.DataError):
        TensorImage(np.array([[np.nan]]))


def test_dataset_label_range():
    with pytest.raises(errors.LabelOutOfRange):
        LabeledDataset(np.zeros((2, 2, 2, 1)), np.array([0, 3]), num_classes=3)
    ds = LabeledDataset(np.zeros((2, 2, 2)), np.array([0, 1]))
    assert ds.num_classes == 2 and ds.image_shape == (2, 2, 1)
