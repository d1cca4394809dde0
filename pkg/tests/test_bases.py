import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandinfo import bases
from bandinfo.core import TensorImage
from bandinfo.errors import EmptyBandList, ImageTooSmall


def naive_dft(x):
    """Direct double-sum DFT of an (H, W) array, orthonormal scaling."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for a in range(h):
        for b in range(w):
            acc = 0j
            for k in range(h):
                for l in range(w):
                    acc += x[k, l] * np.exp(-2j * np.pi * (a * k / h + b * l / w))
            out[a, b] = acc / np.sqrt(h * w)
    return out


def lattice_count(h, w, lo, hi):
    """Signed-frequency lattice points with lo <= r < hi, by enumeration."""
    count = 0
    for a in range(h):
        wa = a if a < (h + 1) // 2 else a - h
        for b in range(w):
            wb = b if b < (w + 1) // 2 else b - w
            r = (wa * wa + wb * wb) ** 0.5
            if lo <= r < hi:
                count += 1
    return count


def test_constant_image_is_dc_only():
    spec = bases.dft2(np.full((6, 8, 1), 7.0))
    c = spec.coeffs[..., 0]
    assert abs(c[0, 0] - 7.0 * np.sqrt(48)) < 1e-12
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-12


def test_dft_round_trip_and_parseval():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(9, 12, 3))
    spec = bases.dft2(x)
    assert np.abs(bases.idft2(spec).data - x).max() < 1e-10
    assert abs(np.sum(np.abs(spec.coeffs) ** 2) - np.sum(x ** 2)) / np.sum(x ** 2) < 1e-9


def test_dft_matches_naive_oracle_on_cosine():
    h, w = 8, 6
    k = np.arange(h)[:, None] * np.ones((1, w))
    x = np.cos(2 * np.pi * 3 * k / h)
    got = bases.dft2(x).coeffs[..., 0]
    ref = naive_dft(x)
    assert np.abs(got - ref).max() < 1e-10
    mag = np.abs(got)
    peaks = {tuple(p) for p in np.argwhere(mag > 0.5 * mag.max())}
    assert peaks == {(3, 0), (h - 3, 0)}


def test_dft_linearity():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 5, 7, 2))
    lhs = bases.dft2(2 * a - 3 * b).coeffs
    rhs = 2 * bases.dft2(a).coeffs - 3 * bases.dft2(b).coeffs
    assert np.abs(lhs - rhs).max() < 1e-10


def test_radial_band_zero_contains_dc():
    assert bases.radial_band_mask(8, 8, 0).gain[0, 0] == 1.0


@pytest.mark.parametrize("h,w", [(8, 8), (7, 10), (16, 9)])
def test_radial_counts_match_enumeration(h, w):
    for i in range(bases.max_radial_index(h, w) + 2):
        got = int(bases.radial_band_mask(h, w, i).gain.sum())
        assert got == lattice_count(h, w, i, i + 1)


@pytest.mark.parametrize("h,w", [(8, 8), (7, 10), (32, 32)])
def test_radial_bands_partition_grid(h, w):
    masks = [bases.radial_band_mask(h, w, i).gain for i in range(bases.max_radial_index(h, w) + 3)]
    total = np.sum(masks, axis=0)
    np.testing.assert_array_equal(total, np.ones((h, w)))


def test_beyond_nyquist_is_empty():
    assert bases.radial_band_mask(8, 8, 50).gain.sum() == 0


def test_butterworth_closed_forms():
    assert bases.butterworth_gain(0.0, 4.0) == 1.0
    assert abs(bases.butterworth_gain(4.0, 4.0) - 2 ** -0.5) < 1e-15
    assert abs(bases.butterworth_gain(8.0, 4.0) - 0.031234) < 1e-6
    assert abs(bases.butterworth_gain(8.0, 4.0) - (1 + 2 ** 10) ** -0.5) < 1e-15
    assert bases.butterworth_gain(0.0, 4.0, kind="high") == 0.0
    assert abs(bases.butterworth_gain(4.0, 4.0, kind="high") - 2 ** -0.5) < 1e-15


@given(st.floats(0.5, 50), st.integers(1, 8))
def test_butterworth_monotone(cutoff, order):
    r = np.linspace(0, 4 * cutoff, 200)
    lo = bases.butterworth_gain(r, cutoff, order, "low")
    hi = bases.butterworth_gain(r, cutoff, order, "high")
    assert np.all(np.diff(lo) <= 0) and np.all(np.diff(hi) >= 0)
    assert np.all((lo >= 0) & (lo <= 1)) and np.all((hi >= 0) & (hi <= 1))


def test_sinc_mask():
    m = bases.sinc_mask(16, 16, 0.7)
    assert m.gain[0, 0] == 1.0
    assert np.all((m.gain >= 0) & (m.gain <= 1))
    r = bases.radius(16, 16)
    np.testing.assert_allclose(m.gain[r > 0], np.abs(np.sin(0.7 * r[r > 0]) / (0.7 * r[r > 0])))


def test_random_union_peaks_near_centers():
    m = bases.random_union_mask(200, 200, [(5, 2), (30, 2), (50, 2), (80, 2)])
    r = bases.radius(200, 200)
    for c in (5, 30, 50, 80):
        assert m.gain[np.isclose(r, c)].min() > 0.5
    for far in (15, 40, 65, 95):
        assert m.gain[np.isclose(r, far)].max() < 0.5
    with pytest.raises(EmptyBandList):
        bases.random_union_mask(8, 8, [])


def test_phase_mask_keep_all_is_identity():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(10, 12, 3))
    m = bases.phase_mask(10, 12)
    assert np.abs(m.filter(x) - x).max() < 1e-10


def test_phase_mask_preserves_amplitude():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(16, 16, 1))
    m = bases.phase_mask(16, 16, 0, 4)
    y = m.filter(x)
    np.testing.assert_allclose(np.abs(bases.fft_images(y)), np.abs(bases.fft_images(x)), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 17), st.integers(4, 17), st.integers(0, 10_000))
def test_masks_keep_real_images_real(h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(h, w, 2))
    for m in (bases.radial_band_mask(h, w, 1), bases.butterworth_mask(h, w, 2.5),
              bases.butterworth_mask(h, w, 1.5, kind="high"), bases.sinc_mask(h, w, 0.9),
              bases.random_union_mask(h, w, [(2, 2), (4, 1)]), bases.phase_mask(h, w, 1, 3)):
        imag = bases.ifft_images(m.apply(bases.fft_images(x))).imag
        assert np.abs(imag).max() < 1e-9


def test_dwt_round_trip_and_energy():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(32, 32, 3))
    pyr = bases.dwt2(x)
    assert np.abs(bases.idwt2(pyr) - x).max() < 1e-8
    energy = sum(np.sum(b ** 2) for b in pyr.blocks)
    assert abs(energy - np.sum(x ** 2)) / np.sum(x ** 2) < 1e-8
    assert pyr.size == x.size


def test_dwt_constant_has_no_detail():
    pyr = bases.dwt2(np.full((32, 32, 1), 5.0))
    for b in pyr.blocks[1:]:
        assert np.abs(b).max() < 1e-12


def test_dwt_block_order():
    pyr = bases.dwt2(np.random.default_rng(0).normal(size=(32, 32, 1)))
    assert bases.block_names(2) == ["cA2", "cH2", "cV2", "cD2", "cH1", "cV1", "cD1"]
    assert pyr.block(5) is pyr["cV1"]
    assert pyr["cA2"].shape == (8, 8, 1) and pyr["cD1"].shape == (16, 16, 1)


def test_dwt_odd_size_pads_and_crops():
    x = np.random.default_rng(1).normal(size=(13, 10, 1))
    pyr = bases.dwt2(x)
    assert pyr.padded_shape == (16, 12, 1)
    assert pyr.size == 16 * 12
    assert np.abs(bases.idwt2(pyr) - x).max() < 1e-8


def test_dwt_too_small():
    with pytest.raises(ImageTooSmall):
        bases.dwt2(np.zeros((3, 8, 1)))


def test_tensor_image_inputs():
    img = TensorImage(np.ones((4, 4)))
    assert bases.dft2(img).shape == (4, 4, 1)
