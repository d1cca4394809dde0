"""Noise-level estimation and bootstrap stability of PCA eigenspaces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import LabeledDataset, as_array, fit_pca
from .errors import ConfigError, DimensionMismatch, ImageTooSmall, NotOrthonormal

ORTHO_TOL = 1e-6


def _plane_design(patch: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:patch, 0:patch]
    design = np.stack([np.ones(patch * patch), xx.ravel(), yy.ravel()], axis=1).astype(float)
    even = ((xx + yy) % 2 == 0).ravel()
    return design, even


def patch_scores(channel: np.ndarray, patch: int = 8):
    """Per-block score and noise-variance estimate from plane-fit residuals.

    The plane is fitted on the even checkerboard pixels of each block. The
    score is the even-pixel residual variance; the estimate uses the odd
    pixels, corrected for the plane's prediction error. In least squares the
    even residuals are independent of the fitted plane, so ranking blocks by
    score does not bias the odd-pixel estimate.
    """
    h, w = channel.shape
    nb_y, nb_x = h // patch, w // patch
    blocks = channel[: nb_y * patch, : nb_x * patch].reshape(nb_y, patch, nb_x, patch)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(-1, patch * patch)
    design, even = _plane_design(patch)
    xe, xo = design[even], design[~even]
    pinv = np.linalg.pinv(xe)
    coef = blocks[:, even] @ pinv.T
    res_e = blocks[:, even] - coef @ xe.T
    res_o = blocks[:, ~even] - coef @ xo.T
    score = np.sum(res_e ** 2, axis=1) / (even.sum() - 3)
    # E[RSS_odd] = sigma^2 (n_odd + tr(X_o (X_e^T X_e)^-1 X_o^T))
    inflation = xo.shape[0] + np.trace(xo @ np.linalg.inv(xe.T @ xe) @ xo.T)
    estimate = np.sum(res_o ** 2, axis=1) / inflation
    return score, estimate


def estimate_noise(image, patch: int = 8, quantile: float = 0.05) -> float:
    """Noise variance from the most homogeneous ``quantile`` of patch x patch blocks.

    Channels are handled separately and their estimates averaged.
    """
    x = as_array(image)
    if min(x.shape[:2]) < patch or patch < 3:
        raise ImageTooSmall(f"image {x.shape[:2]} is smaller than a {patch}x{patch} patch")
    if not 0 < quantile <= 1:
        raise ConfigError("quantile must lie in (0, 1]")
    out = []
    for c in range(x.shape[2]):
        score, est = patch_scores(x[:, :, c], patch)
        k = max(1, int(np.ceil(quantile * score.size)))
        chosen = np.argsort(score, kind="stable")[:k]
        out.append(est[chosen].mean())
    return float(np.mean(out))


def textured_image(size: int = 256, sigma: float = 2.0, amplitude: float = 20.0, seed: int = 0,
                   channels: int = 1, correlation: float = 0.01) -> tuple[np.ndarray, float]:
    """Smooth random texture plus white noise of standard deviation ``sigma``; returns (image, sigma^2).

    ``correlation`` is the Gaussian spectral width in cycles per pixel; larger
    values give rougher texture, which biases plane-fit estimates upward.
    """
    rng = np.random.default_rng(seed)
    f = np.fft.fftfreq(size)
    env = np.exp(-(f[:, None] ** 2 + f[None, :] ** 2) / (2 * correlation ** 2))
    tex = np.fft.ifft2(np.fft.fft2(rng.normal(size=(channels, size, size))) * env).real
    tex = amplitude * tex / tex.std()
    img = np.moveaxis(tex, 0, -1) + sigma * rng.normal(size=(size, size, channels))
    return img, sigma ** 2


# --- subspace similarity -------------------------------------------------------------


def _check_orthonormal(v: np.ndarray, name: str):
    g = v.T @ v
    if np.abs(g - np.eye(g.shape[0])).max() > ORTHO_TOL:
        raise NotOrthonormal(f"{name} columns are not orthonormal")


def subspace_similarity(v1: np.ndarray, v2: np.ndarray, normalization: str = "sqrt",
                        check: bool = True) -> float:
    """||V1^T V2||_F / sqrt(d) for two bases with d orthonormal columns each.

    ``normalization="linear"`` divides by d instead. Bases of unequal size are
    normalized by the smaller column count.
    """
    v1, v2 = np.asarray(v1, float), np.asarray(v2, float)
    if v1.ndim != 2 or v2.ndim != 2 or v1.shape[0] != v2.shape[0]:
        raise DimensionMismatch(f"ambient dimensions differ: {v1.shape} vs {v2.shape}")
    if check:
        _check_orthonormal(v1, "V1")
        _check_orthonormal(v2, "V2")
    d = min(v1.shape[1], v2.shape[1])
    if d == 0:
        raise DimensionMismatch("empty basis")
    fro = np.linalg.norm(v1.T @ v2)
    if normalization == "sqrt":
        return float(min(fro / np.sqrt(d), 1.0))
    if normalization == "linear":
        return float(fro / d)
    raise ConfigError(f"unknown normalization {normalization!r}")


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    bands: list
    n: int
    resamples: int
    seed: int
    normalization: str = "sqrt"
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["band_i,band_j,similarity"]
        b = len(self.bands)
        for i in range(b):
            for j in range(b):
                lines.append(f"{i},{j},{float(self.values[i, j])!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "schema": 1, "values": self.values.tolist(), "bands": [list(b) for b in self.bands],
            "n": self.n, "resamples": self.resamples, "seed": self.seed,
            "normalization": self.normalization, **self.meta,
        }, indent=2, sort_keys=True)


def index_bands(total: int, n_bands: int) -> list[tuple[int, int]]:
    if not 1 <= n_bands <= total:
        raise ConfigError(f"cannot split {total} eigenvectors into {n_bands} bands")
    width = total // n_bands
    edges = [k * width for k in range(n_bands)] + [total]
    return [(edges[k], edges[k + 1]) for k in range(n_bands)]


def band_similarity(u1: np.ndarray, u2: np.ndarray, bands, normalization: str = "sqrt") -> np.ndarray:
    b = len(bands)
    out = np.zeros((b, b))
    for i, (lo1, hi1) in enumerate(bands):
        for j, (lo2, hi2) in enumerate(bands):
            out[i, j] = subspace_similarity(u1[:, lo1:hi1], u2[:, lo2:hi2], normalization, check=False)
    return out


def bootstrap_stability(data, n: int, resamples: int = 50, bands: int = 10, seed: int = 0,
                        normalization: str = "sqrt") -> SimilarityMatrix:
    """Average band-by-band eigenspace similarity over pairs of size-n bootstrap resamples."""
    x = np.asarray(data.flat() if isinstance(data, LabeledDataset) else data, dtype=float)
    x = x.reshape(len(x), -1)
    if not 1 <= n <= len(x):
        raise ConfigError(f"resample size {n} must lie in [1, {len(x)}]")
    if resamples < 2:
        raise ConfigError("need at least two resamples")
    spans = index_bands(x.shape[1], bands)
    rng = np.random.default_rng(seed)
    draws = [rng.integers(0, len(x), size=n) for _ in range(resamples)]
    vecs = [fit_pca(x[idx]).eigenvectors for idx in draws]
    total = np.zeros((bands, bands))
    pairs = 0
    for r in range(resamples):
        for s in range(r + 1, resamples):
            m = band_similarity(vecs[r], vecs[s], spans, normalization)
            total += m + m.T
            pairs += 2
    values = total / pairs
    return SimilarityMatrix(values, spans, n, resamples, seed, normalization)


def spiked_data(n: int = 2000, dim: int = 50, spikes=(40.0, 30.0, 20.0, 15.0, 10.0), seed: int = 0) -> np.ndarray:
    """Gaussian samples whose covariance has planted spikes on a unit isotropic bulk, in a random basis."""
    rng = np.random.default_rng(seed)
    var = np.ones(dim)
    var[: len(spikes)] = spikes
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return (rng.normal(size=(n, dim)) * np.sqrt(var)) @ q.T
