"""Auditory front end and slow feature analysis.

Pipeline: a 4th-order gammatone filterbank with ERB-rate spaced centers, a
temporal difference-of-kernels filter, per-channel z-scoring, then linear
SFA on the resulting channels. ``discriminate_pair`` scores how well a small
MLP separates two feature streams frame by frame.
"""

from __future__ import annotations

import warnings
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from sklearn.model_selection import train_test_split

from .core import LabeledDataset
from .errors import (
    ConfigError,
    DataError,
    EmptyAudio,
    IndexOutOfRange,
    InvalidRange,
    KernelTruncated,
    RankDeficientSignal,
    TooFewFrames,
)
from .probes import ProbeConfig, accuracy, predict, train_probe

N_CHANNELS = 42
F_LO, F_HI = 22.9, 20208.0
GAMMATONE_ORDER = 4
# (a, b, m) for g(n) = a n^m exp(-b n)
KERNEL_1 = (1.5, 0.04, 2)
KERNEL_2 = (1.0, 0.036, 2)
DECAY = 1e-6


def erb(f):
    return 24.7 * (4.37e-3 * np.asarray(f, dtype=float) + 1.0)


def erb_rate(f):
    return 21.4 * np.log10(1.0 + 4.37e-3 * np.asarray(f, dtype=float))


def inverse_erb_rate(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) / 4.37e-3


def center_frequencies(n: int = N_CHANNELS, f_lo: float = F_LO, f_hi: float = F_HI) -> np.ndarray:
    if not 0 < f_lo < f_hi or n < 1:
        raise InvalidRange(f"need 0 < f_lo < f_hi and n >= 1, got {f_lo}, {f_hi}, {n}")
    if n == 1:
        return np.array([f_lo])
    return inverse_erb_rate(np.linspace(erb_rate(f_lo), erb_rate(f_hi), n))


@dataclass
class GammatoneBank:
    sample_rate: float
    centers: np.ndarray
    kernels: list

    def __len__(self):
        return len(self.centers)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Channel outputs (C, T), truncated to the input length."""
        x = np.asarray(x, dtype=float)
        return np.stack([sps.fftconvolve(x, h)[: len(x)] for h in self.kernels])


def gammatone_kernel(fc: float, sample_rate: float, order: int = GAMMATONE_ORDER) -> np.ndarray:
    bw = 1.019 * erb(fc)
    # envelope t^(order-1) exp(-2 pi bw t) peaks at (order-1) / (2 pi bw)
    rate = 2 * np.pi * bw
    t_peak = (order - 1) / rate
    t_end = t_peak
    while (t_end / t_peak) ** (order - 1) * np.exp(-rate * (t_end - t_peak)) > DECAY:
        t_end *= 1.5
    t = np.arange(int(np.ceil(t_end * sample_rate)) + 1) / sample_rate
    env = t ** (order - 1) * np.exp(-rate * t)
    h = env * np.cos(2 * np.pi * fc * t)
    # remove the DC response, which is not negligible for the lowest channels
    h = h - env * (h.sum() / env.sum())
    gain = np.abs(np.sum(h * np.exp(-2j * np.pi * fc * t)))
    return h / gain


def gammatone_bank(sample_rate: float, n: int = N_CHANNELS, f_lo: float = F_LO,
                   f_hi: float = F_HI) -> GammatoneBank:
    """Unit-gain-at-center 4th-order gammatone filters; channels at or above Nyquist are dropped."""
    centers = center_frequencies(n, f_lo, f_hi)
    keep = centers < sample_rate / 2
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} channels above Nyquist "
                      f"({sample_rate / 2:.0f} Hz)", RuntimeWarning, stacklevel=2)
        centers = centers[keep]
    if centers.size == 0:
        raise InvalidRange("no gammatone channel lies below Nyquist")
    return GammatoneBank(sample_rate, centers, [gammatone_kernel(f, sample_rate) for f in centers])


def kernel_g(n, a: float, b: float, m: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return a * n ** m * np.exp(-b * n)


def _decay_point(a, b, m) -> int:
    peak = kernel_g(m / b, a, b, m)
    n = int(np.ceil(m / b))
    while kernel_g(n, a, b, m) > DECAY * peak:
        n += 1
    return n


def temporal_filter(n_max: int | None = None) -> np.ndarray:
    """Difference of the two kernels on n = 0..n_max (chosen automatically when None)."""
    need = max(_decay_point(*KERNEL_1), _decay_point(*KERNEL_2))
    if n_max is None:
        n_max = need
    elif n_max < need:
        raise KernelTruncated(f"n_max={n_max} cuts the kernels before they decay; need >= {need}")
    n = np.arange(n_max + 1)
    return kernel_g(n, *KERNEL_1) - kernel_g(n, *KERNEL_2)


@dataclass
class Cochleagram:
    data: np.ndarray
    centers: np.ndarray
    sample_rate: float
    degenerate: np.ndarray = field(default=None)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def zscore_channels(x: np.ndarray, rel_tol: float = 1e-10):
    """Z-score rows; rows with (relative) zero spread become zero and are flagged."""
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    scale = np.max(np.abs(x)) if x.size else 0.0
    bad = (std[:, 0] <= rel_tol * max(scale, 1e-300)) | (std[:, 0] == 0)
    out = np.zeros_like(x)
    ok = ~bad
    out[ok] = (x[ok] - mean[ok]) / std[ok]
    return out, bad


def cochleagram(audio, sample_rate: float, bank: GammatoneBank | None = None,
                kernel: np.ndarray | None = None, envelope: bool = True) -> Cochleagram:
    """Gammatone channels, temporal kernel, per-channel z-score.

    With ``envelope`` the temporal kernel acts on each channel's Hilbert
    envelope. The kernel is a low-pass of a few hundred Hz at audio rates, so
    applied to raw carriers it would wipe out every high channel.
    """
    audio = np.asarray(audio, dtype=float).ravel()
    if audio.size == 0:
        raise EmptyAudio("audio has no samples")
    bank = bank or gammatone_bank(sample_rate)
    kernel = temporal_filter() if kernel is None else kernel
    spectral = bank.apply(audio)
    if envelope:
        spectral = np.abs(sps.hilbert(spectral, axis=1))
    t = audio.size
    filtered = np.stack([sps.fftconvolve(ch, kernel)[:t] for ch in spectral])
    data, bad = zscore_channels(filtered)
    if bad.any():
        warnings.warn(f"{int(bad.sum())} cochleagram channels carry no signal", RuntimeWarning, stacklevel=2)
    return Cochleagram(data, bank.centers, sample_rate, bad)


# --- slow feature analysis ---------------------------------------------------------


@dataclass
class SfaFeatures:
    """Rows of ``weights`` map centered input to outputs, slowest first."""

    weights: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray

    def transform(self, signal: np.ndarray) -> np.ndarray:
        return self.weights @ (np.asarray(signal, dtype=float) - self.mean[:, None])


def sfa_fit(signal: np.ndarray, m: int | None = None, rank_tol: float = 1e-10) -> SfaFeatures:
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    d, t = x.shape
    m = d if m is None else m
    if not 1 <= m <= d:
        raise IndexOutOfRange(f"m must lie in [1, {d}]")
    if t < 2 * d:
        raise TooFewFrames(f"SFA needs at least {2 * d} samples, got {t}")
    if not np.all(np.isfinite(x)):
        raise DataError("signal contains NaN or Inf")
    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    lam, u = np.linalg.eigh(xc @ xc.T / t)
    if lam[0] <= rank_tol * max(lam[-1], 0.0) or lam[-1] <= 0:
        raise RankDeficientSignal("signal covariance is singular; cannot whiten")
    whiten = (u / np.sqrt(lam)) @ u.T
    z = whiten @ xc
    dz = np.diff(z, axis=1)
    mu, p = np.linalg.eigh(dz @ dz.T / (t - 1))
    return SfaFeatures(p[:, :m].T @ whiten, mean, mu[:m])


def sfa_transform(features: SfaFeatures, signal: np.ndarray) -> np.ndarray:
    return features.transform(signal)


def slowness(y: np.ndarray) -> np.ndarray:
    """Mean squared forward difference of each row."""
    return np.mean(np.diff(np.asarray(y, dtype=float), axis=1) ** 2, axis=1)


# --- pair discrimination -------------------------------------------------------------


@dataclass
class PairResult:
    mean: float
    low: float
    high: float
    accuracies: np.ndarray
    n_slow: int
    start: int

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def pair_mlp_config() -> ProbeConfig:
    return ProbeConfig(kind="mlp", hidden=5, epochs=200, lr=1e-3, batch_size=64, test_fraction=0.5)


def discriminate_pair(features_a: np.ndarray, features_b: np.ndarray, n_slow: int, seed: int = 0,
                      start: int = 0, runs: int = 5, config: ProbeConfig | None = None,
                      min_frames: int = 10) -> PairResult:
    """Frame-wise MLP discrimination of two (m, T) feature streams.

    Uses rows ``start:start + n_slow``; each run draws a fresh stratified
    50/50 split and MLP initialisation from a seed derived from ``seed``.
    """
    a, b = np.atleast_2d(features_a), np.atleast_2d(features_b)
    if a.shape[0] != b.shape[0]:
        raise ConfigError("feature streams differ in feature count")
    if n_slow < 1 or start < 0 or start + n_slow > a.shape[0]:
        raise IndexOutOfRange(f"rows {start}:{start + n_slow} exceed {a.shape[0]} features")
    if min(a.shape[1], b.shape[1]) < min_frames:
        raise TooFewFrames(f"each stream needs at least {min_frames} frames")
    x = np.concatenate([a[start:start + n_slow].T, b[start:start + n_slow].T])
    y = np.r_[np.zeros(a.shape[1], int), np.ones(b.shape[1], int)]
    cfg = config or pair_mlp_config()
    seeds = np.random.SeedSequence(seed).generate_state(runs)
    accs = []
    for s in seeds:
        s = int(s)
        tr, te = train_test_split(np.arange(len(y)), test_size=0.5, random_state=s, stratify=y)
        train = LabeledDataset(x[tr].reshape(len(tr), 1, n_slow, 1), y[tr], num_classes=2)
        model = train_probe(train, cfg, seed=s)
        accs.append(accuracy(predict(model, x[te].reshape(len(te), 1, n_slow, 1)), y[te]))
    accs = np.array(accs)
    half = 1.96 * accs.std(ddof=1) / np.sqrt(runs) if runs > 1 else 0.0
    return PairResult(float(accs.mean()), float(accs.mean() - half), float(accs.mean() + half),
                      accs, n_slow, start)


# --- synthetic streams and audio I/O --------------------------------------------------


def latent_pair(t: int = 2000, d: int = 10, seed: int = 0, ratios=None):
    """Two classes of a mixed d-source signal, sources ordered slow to fast.

    Source j is unit-variance AR(1) noise with a time constant that shrinks
    geometrically with j. Class b scales source j by ``ratios[j]`` (default
    4 down to 2), so the classes differ on every timescale, most on the slow
    sources. Returns (signal_a, signal_b), each (d, t).
    """
    rng = np.random.default_rng(seed)
    tau = np.geomspace(200.0, 1.5, d)
    rho = np.exp(-1.0 / tau)
    ratios = np.geomspace(4.0, 2.0, d) if ratios is None else np.asarray(ratios, dtype=float)
    mix, _ = np.linalg.qr(rng.normal(size=(d, d)))
    out = []
    for scale in (np.ones(d), ratios):
        s = np.zeros((d, t))
        s[:, 0] = rng.normal(size=d)
        noise = rng.normal(size=(d, t)) * np.sqrt(1 - rho ** 2)[:, None]
        for k in range(1, t):
            s[:, k] = rho * s[:, k - 1] + noise[:, k]
        out.append(mix @ (s * scale[:, None]))
    return out[0], out[1]


def two_class_audio(duration: float = 1.0, sample_rate: float = 16000.0, seed: int = 0):
    """Two synthetic calls: harmonic stacks with different pitch contours and slow AM."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration * sample_rate)) / sample_rate
    calls = []
    for f0, sweep, am in ((300.0, 80.0, 3.0), (520.0, -120.0, 7.0)):
        inst = f0 + sweep * t / duration
        phase = 2 * np.pi * np.cumsum(inst) / sample_rate
        x = sum(np.sin(k * phase) / k for k in range(1, 6))
        x = x * (1 + 0.6 * np.sin(2 * np.pi * am * t)) + 0.05 * rng.normal(size=t.size)
        calls.append(x / np.abs(x).max())
    return calls[0], calls[1], sample_rate


def read_wav(path) -> tuple[np.ndarray, int]:
    """16-bit PCM WAV as float samples in [-1, 1) (first channel) and the sample rate."""
    try:
        with wave.open(str(path), "rb") as fh:
            width, channels, rate = fh.getsampwidth(), fh.getnchannels(), fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if width != 2:
        raise DataError(f"only 16-bit PCM is supported, file has {8 * width}-bit samples")
    x = np.frombuffer(raw, dtype="<i2").reshape(-1, channels)[:, 0]
    if x.size == 0:
        raise EmptyAudio(f"{path} has no samples")
    return x.astype(float) / 32768.0, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())
