"""Mutual information estimators and the Gaussian partial information decomposition.

All quantities are in nats.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from . import bases
from .bands import Basis, BandSpec, band_gain
from .core import LabeledDataset
from .errors import ConfigError, DegenerateLabels, SingularCovariance, TooFewSamples

RIDGE = 1e-9
SINGULAR_RTOL = 1e-12
# LNC threshold; default of the reference LNC implementation
LNC_ALPHA = 0.25
MAX_BAND_DIMS = 10


# --- Gaussian mutual information ------------------------------------------------


@dataclass(frozen=True)
class GaussianJoint:
    """Joint covariance over named blocks of coordinates."""

    cov: np.ndarray
    blocks: dict

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ConfigError("covariance must be square")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-10 * max(1.0, np.abs(cov).max())):
            raise ConfigError("covariance must be symmetric")
        cov = (cov + cov.T) / 2
        idx = np.concatenate([np.asarray(v, dtype=int).ravel() for v in self.blocks.values()])
        if sorted(idx.tolist()) != list(range(cov.shape[0])):
            raise ConfigError("blocks must partition the covariance coordinates")
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_sizes(cls, cov, **sizes) -> "GaussianJoint":
        blocks, start = {}, 0
        for name, size in sizes.items():
            blocks[name] = np.arange(start, start + size)
            start += size
        return cls(cov, blocks)

    @classmethod
    def from_samples(cls, **arrays) -> "GaussianJoint":
        """Sample (1/n) covariance of the column-stacked arrays."""
        cols = [np.asarray(a, dtype=np.float64).reshape(len(a), -1) for a in arrays.values()]
        z = np.hstack(cols)
        zc = z - z.mean(axis=0)
        cov = zc.T @ zc / z.shape[0]
        return cls.from_sizes(cov, **{k: c.shape[1] for k, c in zip(arrays, cols)})

    def index(self, names) -> np.ndarray:
        if isinstance(names, str):
            names = (names,)
        return np.concatenate([self.blocks[n] for n in names])


def _logdet_pd(m: np.ndarray) -> float:
    """log det of a well-conditioned PD matrix; LinAlgError otherwise."""
    w = np.linalg.eigvalsh(m)
    if w[0] <= SINGULAR_RTOL * max(w[-1], 0.0) or w[-1] <= 0:
        raise np.linalg.LinAlgError("matrix is singular or indefinite")
    c = np.linalg.cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def _conditional_mi(cov, ia, ib) -> float:
    """0.5 * (log det S_b - log det S_{b|a}), with a pseudo-inverse for S_a."""
    saa, sbb, sba = cov[np.ix_(ia, ia)], cov[np.ix_(ib, ib)], cov[np.ix_(ib, ia)]
    cond = sbb - sba @ np.linalg.pinv(saa, rcond=1e-12, hermitian=True) @ sba.T
    return 0.5 * (_logdet_pd(sbb) - _logdet_pd((cond + cond.T) / 2))


def _mi_from_cov(cov, ia, ib) -> float:
    if len(ia) == 0 or len(ib) == 0:
        return 0.0
    iab = np.concatenate([ia, ib])
    try:
        return 0.5 * (_logdet_pd(cov[np.ix_(ia, ia)]) + _logdet_pd(cov[np.ix_(ib, ib)])
                      - _logdet_pd(cov[np.ix_(iab, iab)]))
    except np.linalg.LinAlgError:
        pass
    for a, b in ((ia, ib), (ib, ia)):
        try:
            return _conditional_mi(cov, a, b)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("no nonsingular side")


def gaussian_mi(joint: GaussianJoint, a, b) -> float:
    """I(A; B) = 0.5 (log det S_A + log det S_B - log det S_AB) for jointly Gaussian blocks.

    A singular side (for instance a duplicated coordinate) is handled exactly
    through the conditional form. If both sides are singular, a ridge of
    1e-9 * trace / d is added before giving up with SingularCovariance.
    """
    ia, ib = joint.index(a), joint.index(b)
    if np.intersect1d(ia, ib).size:
        raise ConfigError("mutual information blocks must be disjoint")
    cov = joint.cov
    try:
        mi = _mi_from_cov(cov, ia, ib)
    except np.linalg.LinAlgError:
        d = cov.shape[0]
        eps = RIDGE * max(np.trace(cov), 0.0) / d
        try:
            mi = _mi_from_cov(cov + eps * np.eye(d), ia, ib)
        except np.linalg.LinAlgError:
            raise SingularCovariance("covariance is singular even after ridge regularization") from None
    return max(mi, 0.0)


@dataclass(frozen=True)
class PidResult:
    redundant: float
    synergistic: float
    unique1: float
    unique2: float
    total: float
    mi1: float
    mi2: float

    def as_dict(self) -> dict:
        return asdict(self)


def pid_from_mi(i1: float, i2: float, i12: float) -> PidResult:
    r = min(i1, i2)
    u1, u2 = i1 - r, i2 - r
    s = i12 - r - u1 - u2
    return PidResult(r, s, u1, u2, i12, i1, i2)


def gaussian_pid(joint: GaussianJoint, x1="x1", x2="x2", y="y") -> PidResult:
    """Minimum-MI redundancy PID of I(X1, X2; Y) under a joint Gaussian model."""
    i1 = gaussian_mi(joint, x1, y)
    i2 = gaussian_mi(joint, x2, y)
    i12 = gaussian_mi(joint, (x1, x2) if isinstance(x1, str) else tuple(x1) + tuple(x2), y)
    return pid_from_mi(i1, i2, i12)


def duplicate_source_pid(i1: float) -> PidResult:
    return PidResult(i1, 0.0, 0.0, 0.0, i1, i1, i1)


def one_hot(labels: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """One-hot encoding with the last class dropped, so the block stays nonsingular."""
    labels = np.asarray(labels, dtype=int)
    k = num_classes or int(labels.max()) + 1
    return np.eye(k)[labels][:, : k - 1]


# --- k-NN estimators ---------------------------------------------------------------


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x.reshape(len(x), -1)


def knn_entropy(x, k: int = 3, lnc: bool = False, alpha: float = LNC_ALPHA) -> float:
    """Kozachenko-Leonenko entropy with max-norm balls, optionally LNC-corrected."""
    x = _as_points(x)
    n, d = x.shape
    if n <= k:
        raise TooFewSamples(f"need more than k={k} samples, got {n}")
    tree = cKDTree(x)
    dist, idx = tree.query(x, k + 1, p=np.inf)
    r = dist[:, k]
    scale = np.max(np.ptp(x, axis=0)) if n > 1 else 1.0
    r = np.maximum(r, 1e-15 * max(scale, 1e-300))
    h = digamma(n) - digamma(k) + d * np.log(2.0) + d * np.mean(np.log(r))
    if lnc and d > 1:
        h += _lnc_term(x, idx, r, alpha)
    return float(h)


def _lnc_term(x, idx, r, alpha) -> float:
    """Mean log-ratio of the PCA-aligned neighbour box to the max-norm ball.

    Only points whose ratio falls below ``alpha`` contribute; the term is <= 0.
    """
    n, d = x.shape
    total = 0.0
    for i in range(n):
        nb = x[idx[i]] - x[i]
        _, vecs = np.linalg.eigh(nb.T @ nb)
        extent = np.abs(nb @ vecs).max(axis=0)
        if np.any(extent <= 0):
            continue
        log_ratio = np.sum(np.log(extent)) - d * np.log(r[i])
        if log_ratio < np.log(alpha):
            total += log_ratio
    return total / n


def kraskov_mi(x, y, k: int = 3, lnc: bool = False, alpha: float = LNC_ALPHA) -> float:
    """I(X; Y) for continuous X and categorical Y from k-NN entropies.

    Uses H(X) - sum_y p(y) H(X | Y=y), clamped below at zero.
    """
    x = _as_points(x)
    y = np.asarray(y)
    n = len(x)
    if len(y) != n:
        raise ConfigError("x and y differ in length")
    if n < 10 * k:
        raise TooFewSamples(f"need at least {10 * k} samples for k={k}, got {n}")
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) < 2:
        raise DegenerateLabels("mutual information needs at least two distinct labels")
    if counts.min() <= k:
        raise TooFewSamples(f"every label needs more than k={k} samples")
    h = knn_entropy(x, k, lnc, alpha)
    h_cond = sum((c / n) * knn_entropy(x[y == lab], k, lnc, alpha) for lab, c in zip(labels, counts))
    return max(h - h_cond, 0.0)


# --- band-pair PID ---------------------------------------------------------------------


def real_fourier_coefficients(x: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Real orthonormal Fourier coefficients of (n, H, W, C) images on the ``keep`` grid cells.

    Each conjugate pair contributes sqrt(2) Re and sqrt(2) Im of one
    representative; self-conjugate frequencies contribute their real part.
    """
    n, h, w, c = x.shape
    coeffs = bases.fft_images(x)
    cols = []
    for a, b in np.argwhere(keep):
        pa, pb = (-a) % h, (-b) % w
        if (pa, pb) < (a, b):
            if keep[pa, pb]:
                continue
        if (pa, pb) == (a, b):
            cols.append(coeffs[:, a, b, :].real)
        else:
            cols.append(np.sqrt(2) * coeffs[:, a, b, :].real)
            cols.append(np.sqrt(2) * coeffs[:, a, b, :].imag)
    if not cols:
        return np.zeros((n, 0))
    return np.concatenate(cols, axis=1)


def band_coefficients(images: np.ndarray, spec: BandSpec, basis: Basis) -> np.ndarray:
    """Coefficients of each sample inside the box version of a band, (n, k)."""
    box = spec.box()
    gain = band_gain(box, basis)
    if basis.kind == "pca":
        sp = basis.spectrum
        flat = images.reshape(len(images), -1) - sp.mean
        return flat @ sp.eigenvectors[:, np.flatnonzero(gain)]
    if basis.kind == "fourier":
        return real_fourier_coefficients(images, gain.gain > 0)
    pyr = bases.dwt2(images, basis.levels)
    blocks = [pyr.blocks[j].reshape(len(images), -1) for j in np.flatnonzero(gain)]
    return np.concatenate(blocks, axis=1) if blocks else np.zeros((len(images), 0))


def top_variance_columns(z: np.ndarray, limit: int = MAX_BAND_DIMS) -> np.ndarray:
    var = z.var(axis=0)
    order = np.argsort(-var, kind="stable")[:limit]
    return z[:, np.sort(order)]


@dataclass
class PidGrid:
    bands: list
    cells: list  # cells[i][j] -> PidResult

    def rows(self) -> list[dict]:
        out = []
        for i, bi in enumerate(self.bands):
            for j, bj in enumerate(self.bands):
                c = self.cells[i][j]
                out.append({"band_i": bi, "band_j": bj, "R": c.redundant, "S": c.synergistic,
                            "U1": c.unique1, "U2": c.unique2, "I": c.total})
        return out


def pid_matrix(dataset: LabeledDataset, bands, basis: Basis, max_dims: int = MAX_BAND_DIMS) -> PidGrid:
    """Gaussian PID for every pair of bands against one-hot labels.

    Each band is represented by its coefficients, reduced to the ``max_dims``
    highest-variance coordinates. Diagonal cells use the duplicate-source
    convention: R = I(X_i; Y), U1 = U2 = S = 0.
    """
    if not dataset.categorical:
        raise ConfigError("PID grids need categorical targets")
    bands = list(bands)
    y = one_hot(dataset.targets, dataset.num_classes)
    feats = [top_variance_columns(band_coefficients(dataset.images, s, basis), max_dims) for s in bands]
    b = len(bands)
    cells = [[None] * b for _ in range(b)]
    mi = []
    for i in range(b):
        joint = GaussianJoint.from_samples(x=feats[i], y=y)
        mi.append(gaussian_mi(joint, "x", "y") if feats[i].shape[1] else 0.0)
    for i in range(b):
        cells[i][i] = duplicate_source_pid(mi[i])
        for j in range(i + 1, b):
            joint = GaussianJoint.from_samples(x1=feats[i], x2=feats[j], y=y)
            i12 = gaussian_mi(joint, ("x1", "x2"), "y") if feats[i].shape[1] + feats[j].shape[1] else 0.0
            cells[i][j] = pid_from_mi(mi[i], mi[j], i12)
            cells[j][i] = pid_from_mi(mi[j], mi[i], i12)
    return PidGrid([str(s) for s in bands], cells)
