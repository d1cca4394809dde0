import warnings

import numpy as np
import pytest
from scipy import signal as sps

from bandinfo.audio import (
    KERNEL_1,
    KERNEL_2,
    center_frequencies,
    cochleagram,
    discriminate_pair,
    gammatone_bank,
    kernel_g,
    latent_pair,
    read_wav,
    sfa_fit,
    slowness,
    temporal_filter,
    write_wav,
)
from bandinfo.errors import (
    DataError,
    EmptyAudio,
    IndexOutOfRange,
    KernelTruncated,
    RankDeficientSignal,
    TooFewFrames,
)

FS = 44100


@pytest.fixture(scope="module")
def bank():
    return gammatone_bank(FS)


def test_center_frequencies():
    c = center_frequencies()
    assert len(c) == 42
    assert abs(c[0] - 22.9) < 1e-9 and abs(c[-1] - 20208) < 1e-6
    assert np.all(np.diff(c) > 0)


def test_channels_above_nyquist_dropped():
    with pytest.warns(RuntimeWarning):
        b = gammatone_bank(16000)
    assert len(b) < 42 and b.centers.max() < 8000


def test_pure_tone_peaks_in_own_channel(bank):
    t = np.arange(int(0.4 * FS)) / FS
    for k in range(0, 42, 3):
        y = bank.apply(np.sin(2 * np.pi * bank.centers[k] * t))
        rms = np.sqrt(np.mean(y[:, len(t) // 2:] ** 2, axis=1))
        assert np.argmax(rms) == k


def test_unit_gain_at_center_by_direct_convolution(bank):
    k = 20
    h = bank.kernels[k]
    t = np.arange(int(0.3 * FS)) / FS
    x = np.sin(2 * np.pi * bank.centers[k] * t)
    y = np.convolve(x, h)[: len(x)]
    steady = y[len(h):]
    assert abs(np.sqrt(2 * np.mean(steady ** 2)) - 1.0) < 0.01


def test_silence_gives_zero(bank):
    assert np.all(bank.apply(np.zeros(1000)) == 0)


def test_temporal_kernel_closed_forms():
    n = np.arange(200)
    g1 = kernel_g(n, *KERNEL_1)
    g2 = kernel_g(n, *KERNEL_2)
    assert np.argmax(g1) == 50
    assert np.argmax(g2) in (55, 56)
    k = temporal_filter()
    assert k[0] == 0.0
    np.testing.assert_allclose(k[:200], g1 - g2, rtol=1e-15)
    assert kernel_g(len(k) - 1, *KERNEL_2) < 1e-6 * kernel_g(2 / 0.036, *KERNEL_2)
    with pytest.raises(KernelTruncated):
        temporal_filter(100)


def test_cochleagram_normalization():
    x = np.random.default_rng(0).normal(size=FS // 4)
    c = cochleagram(x, FS)
    assert c.data.shape == (42, FS // 4)
    assert np.abs(c.data.mean(axis=1)).max() < 1e-6
    assert np.abs(c.data.std(axis=1) - 1).max() < 1e-6


def test_cochleagram_chirp_order():
    dur = 2.0
    t = np.arange(int(dur * FS)) / FS
    x = sps.chirp(t, f0=22.9, t1=dur, f1=20208, method="logarithmic")
    c = cochleagram(x, FS)
    frame = 441
    nf = c.data.shape[1] // frame
    energy = np.mean(c.data[:, : nf * frame].reshape(42, nf, frame) ** 2, axis=2)
    peak = np.argmax(energy, axis=1)
    assert np.all(np.diff(peak) >= 0)


def test_cochleagram_dc_and_empty(bank):
    spectral = bank.apply(np.ones(FS // 2))
    assert np.abs(spectral[:, FS // 4:]).max() < 1e-9
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = cochleagram(np.zeros(2000), FS)
    assert c.degenerate.all()
    with pytest.raises(EmptyAudio):
        cochleagram([], FS)


# --- SFA ----------------------------------------------------------------------------

def _two_sines(seed=0, t=10000):
    n = np.arange(t)
    src = np.vstack([np.sin(2 * np.pi * n / 1000), np.sin(2 * np.pi * n / 10)])
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(2, 2)))
    return q @ src, src


def test_sfa_recovers_slow_source():
    x, src = _two_sines()
    y = sfa_fit(x).transform(x)
    assert abs(np.corrcoef(y[0], src[0])[0, 1]) > 0.99


def test_sfa_constraints_and_slowness():
    rng = np.random.default_rng(1)
    x = np.cumsum(rng.normal(size=(6, 3000)), axis=1) + rng.normal(size=(6, 3000))
    f = sfa_fit(x, m=4)
    y = f.transform(x)
    assert np.abs(y.mean(axis=1)).max() < 1e-6
    assert np.abs(y @ y.T / y.shape[1] - np.eye(4)).max() < 1e-6
    assert np.all(np.diff(f.eigenvalues) >= 0)
    np.testing.assert_allclose(slowness(y), f.eigenvalues, atol=1e-8)


def test_sfa_matches_derivative_eigendecomposition_on_white_input():
    rng = np.random.default_rng(2)
    x = np.cumsum(rng.normal(size=(5, 4000)), axis=1)
    x = x - x.mean(axis=1, keepdims=True)
    lam, u = np.linalg.eigh(x @ x.T / x.shape[1])
    white = (u / np.sqrt(lam)) @ u.T @ x
    d = np.diff(white, axis=1)
    mu, p = np.linalg.eigh(d @ d.T / (white.shape[1] - 1))
    f = sfa_fit(white)
    for i in range(5):
        w = f.weights[i]
        assert min(np.abs(w - p[:, i]).max(), np.abs(w + p[:, i]).max()) < 1e-8
    np.testing.assert_allclose(f.eigenvalues, mu, atol=1e-8)


def test_sfa_errors():
    with pytest.raises(RankDeficientSignal):
        sfa_fit(np.vstack([np.arange(100.0), 2 * np.arange(100.0)]))
    with pytest.raises(TooFewFrames):
        sfa_fit(np.random.default_rng(0).normal(size=(10, 15)))


# --- pair discrimination -------------------------------------------------------------

@pytest.fixture(scope="module")
def streams():
    a, b = latent_pair(1500, 10, seed=0)
    f = sfa_fit(np.hstack([a, b]))
    return f.transform(a), f.transform(b)


def test_separable_pair(streams):
    res = discriminate_pair(*streams, n_slow=5, seed=0)
    assert res.mean > 0.9 and res.low <= res.mean <= res.high


def test_accuracy_falls_slowly_with_faster_features(streams):
    slow = discriminate_pair(*streams, n_slow=5, seed=0, start=0).mean
    fast = discriminate_pair(*streams, n_slow=5, seed=0, start=5).mean
    assert slow > fast > 0.6


def test_same_source_halves_are_indistinguishable(streams):
    # disjoint halves of one stream; a shuffled copy would duplicate frames across
    # labels and bias accuracy below chance
    a = streams[0]
    means = []
    for seed in range(10):
        perm = np.random.default_rng(seed).permutation(a.shape[1])
        half = len(perm) // 2
        means.append(discriminate_pair(a[:, perm[:half]], a[:, perm[half:]], n_slow=3, seed=seed).mean)
    assert abs(np.mean(means) - 0.5) < 0.02
    assert np.abs(np.array(means) - 0.5).max() < 0.05


def test_discriminate_is_deterministic(streams):
    a = discriminate_pair(*streams, n_slow=2, seed=4)
    b = discriminate_pair(*streams, n_slow=2, seed=4)
    np.testing.assert_array_equal(a.accuracies, b.accuracies)


def test_discriminate_errors(streams):
    with pytest.raises(IndexOutOfRange):
        discriminate_pair(*streams, n_slow=11)
    with pytest.raises(TooFewFrames):
        discriminate_pair(streams[0][:, :5], streams[1][:, :5], n_slow=2)


# --- WAV -----------------------------------------------------------------------------

def test_wav_round_trip(tmp_path):
    x = 0.5 * np.sin(np.linspace(0, 40, 800))
    write_wav(tmp_path / "a.wav", x, 8000)
    y, rate = read_wav(tmp_path / "a.wav")
    assert rate == 8000 and np.abs(y - x).max() < 1 / 32767
    (tmp_path / "bad.wav").write_bytes(b"RIFFxxxx")
    with pytest.raises(DataError):
        read_wav(tmp_path / "bad.wav")
