"""Band specifications over PCA, Fourier and wavelet bases, and projections onto them.

Every band reduces to a *gain* over the coefficients of its basis:

* PCA: a vector over eigen-indices (descending eigenvalue order),
* Fourier: a :class:`~bandinfo.bases.FrequencyMask` over the DFT grid,
* wavelet: a vector over pyramid blocks (coarse to fine).

Projecting means transforming, multiplying by the gain and transforming back
to pixel space. Index ranges are half-open, so ``low(i)`` and ``high(i)``
partition the basis exactly.

Canonical text form (``str(spec)`` / :func:`parse_band`)::

    <basis>:full
    <basis>:low:<i>            indices [0, i)
    <basis>:high:<i>           indices [i, end)
    <basis>:band:<i>:<j>       indices [i, j)
    <basis>:centered:<c>:<w>   w indices around c
    <basis>:scale:<k>          the single index k
    fourier:random:<c>/<w>,<c>/<w>,...
    fourier:sinc:<k>

Fourier bands end with a smoothing token: ``butterworth<order>`` (default
``butterworth5``), ``box`` or ``phase`` (hard mask on phase, amplitude kept).
PCA and wavelet bands are always box filters and carry no token.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import bases
from .core import CovarianceSpectrum, LabeledDataset, TensorImage, as_array, fit_pca
from .errors import BasisShapeMismatch, ConfigError, IndexOutOfRange

BASES = ("pca", "fourier", "wavelet")
FILTERS = ("full", "low", "high", "band", "centered", "scale", "random", "sinc")
_ARITY = {"full": 0, "low": 1, "high": 1, "band": 2, "centered": 2, "scale": 1}
SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class BandSpec:
    basis: str
    filter: str
    params: tuple = ()
    smoothing: str = ""
    order: int = 5

    def __post_init__(self):
        if self.basis not in BASES:
            raise ConfigError(f"unknown basis {self.basis!r}")
        if self.filter not in FILTERS:
            raise ConfigError(f"unknown band filter {self.filter!r}")
        if self.filter in ("random", "sinc") and self.basis != "fourier":
            raise ConfigError(f"{self.filter} bands exist only for the Fourier basis")
        smoothing = self.smoothing or ("butterworth" if self.basis == "fourier" else "box")
        if self.filter == "sinc":
            smoothing = "sinc"
        elif smoothing not in ("box", "butterworth", "phase"):
            raise ConfigError(f"unknown smoothing {smoothing!r}")
        if self.basis != "fourier" and smoothing != "box":
            raise ConfigError("PCA and wavelet bands only support box filters")
        if self.filter == "random" and smoothing == "phase":
            raise ConfigError("random unions are amplitude masks")
        object.__setattr__(self, "smoothing", smoothing)
        if self.filter in _ARITY and len(self.params) != _ARITY[self.filter]:
            raise ConfigError(f"{self.filter} takes {_ARITY[self.filter]} parameter(s)")
        if self.filter in ("low", "high", "band", "centered", "scale"):
            if any(int(p) != p for p in self.params):
                raise ConfigError("band indices must be integers")
            object.__setattr__(self, "params", tuple(int(p) for p in self.params))
            if min(self.params) < 0:
                raise IndexOutOfRange("band indices must be non-negative")
        if self.filter == "band" and self.params[1] < self.params[0]:
            raise IndexOutOfRange("band range must satisfy i <= j")
        if self.filter == "centered" and self.params[1] < 1:
            raise ConfigError("band width must be at least 1")
        if self.filter == "random":
            pairs = tuple((int(c), int(w)) for c, w in self.params)
            if not pairs:
                raise ConfigError("random union needs at least one band")
            if any(w < 1 for _, w in pairs):
                raise ConfigError("band width must be at least 1")
            object.__setattr__(self, "params", pairs)
        if self.filter == "sinc":
            if len(self.params) != 1 or not self.params[0] > 0:
                raise ConfigError("sinc takes one positive frequency")
            object.__setattr__(self, "params", (float(self.params[0]),))

    # constructors mirroring the band vocabulary
    @classmethod
    def full(cls, basis, **kw):
        return cls(basis, "full", (), **kw)

    @classmethod
    def low_pass(cls, basis, i, **kw):
        return cls(basis, "low", (i,), **kw)

    @classmethod
    def high_pass(cls, basis, i, **kw):
        return cls(basis, "high", (i,), **kw)

    @classmethod
    def range(cls, basis, i, j, **kw):
        return cls(basis, "band", (i, j), **kw)

    @classmethod
    def band_pass(cls, basis, center, width, **kw):
        return cls(basis, "centered", (center, width), **kw)

    @classmethod
    def scale(cls, basis, k, **kw):
        return cls(basis, "scale", (k,), **kw)

    @classmethod
    def random_union(cls, pairs, **kw):
        return cls("fourier", "random", tuple(pairs), **kw)

    @classmethod
    def sinc(cls, k):
        return cls("fourier", "sinc", (k,))

    def ranges(self) -> list[tuple[int, int | None]]:
        """Half-open index ranges selected by the box version of this band."""
        f, p = self.filter, self.params
        if f == "full":
            return [(0, None)]
        if f == "low":
            return [(0, p[0])]
        if f == "high":
            return [(p[0], None)]
        if f == "band":
            return [(p[0], p[1])]
        if f == "scale":
            return [(p[0], p[0] + 1)]
        if f == "centered":
            return [bases.centered_range(*p)]
        if f == "random":
            return [bases.centered_range(c, w) for c, w in p]
        raise ConfigError("sinc bands have no index range")

    def box(self) -> "BandSpec":
        if self.filter == "sinc" or self.smoothing == "box":
            return self
        return replace(self, smoothing="box")

    def __str__(self) -> str:
        if self.filter == "random":
            args = [",".join(f"{c}/{w}" for c, w in self.params)]
        elif self.filter == "sinc":
            args = [repr(self.params[0])]
        else:
            args = [str(p) for p in self.params]
        parts = [self.basis, self.filter, *args]
        if self.basis == "fourier" and self.filter != "sinc":
            parts.append(f"butterworth{self.order}" if self.smoothing == "butterworth" else self.smoothing)
        return ":".join(parts)


def parse_band(text: str) -> BandSpec:
    parts = text.strip().split(":")
    if len(parts) < 2:
        raise ConfigError(f"cannot parse band spec {text!r}")
    basis, filt, rest = parts[0], parts[1], parts[2:]
    smoothing, order = "", 5
    if rest and (rest[-1] in ("box", "phase") or rest[-1].startswith("butterworth")):
        tok = rest.pop()
        if tok.startswith("butterworth"):
            smoothing = "butterworth"
            if tok != "butterworth":
                try:
                    order = int(tok[len("butterworth"):])
                except ValueError:
                    raise ConfigError(f"bad Butterworth order in {text!r}") from None
        else:
            smoothing = tok
    try:
        if filt == "random":
            if len(rest) != 1:
                raise ValueError
            params = tuple(tuple(int(v) for v in item.split("/")) for item in rest[0].split(","))
            if any(len(pair) != 2 for pair in params):
                raise ValueError
        elif filt == "sinc":
            params = tuple(float(v) for v in rest)
        else:
            params = tuple(int(v) for v in rest)
    except ValueError:
        raise ConfigError(f"cannot parse band parameters in {text!r}") from None
    return BandSpec(basis, filt, params, smoothing, order)


# --- bases fitted to data ----------------------------------------------------


@dataclass
class Basis:
    """What a projection needs to know about a basis, plus per-coefficient power.

    ``power`` holds the variance of the mean-centered data along each
    coefficient (eigenvalues for PCA, mean |DFT|^2 per frequency and channel
    for Fourier, mean squared coefficient per block for wavelets). All three
    sum to the trace of the pixel covariance, so power fractions compare
    across bases.
    """

    kind: str
    image_shape: tuple
    spectrum: CovarianceSpectrum | None = None
    power: object = None
    levels: int = 2
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(np.prod(self.image_shape))

    def num_indices(self) -> int:
        """Number of distinct band indices (eigenvectors, radial rings or blocks)."""
        if self.kind == "pca":
            return self.dim
        if self.kind == "fourier":
            return bases.max_radial_index(*self.image_shape[:2]) + 1
        return 3 * self.levels + 1


def fit_basis(kind: str, dataset, levels: int = 2) -> Basis:
    if kind not in BASES:
        raise ConfigError(f"unknown basis {kind!r}")
    x = dataset.images if isinstance(dataset, LabeledDataset) else np.asarray(dataset, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    shape = x.shape[1:]
    if kind == "pca":
        spec = fit_pca(x)
        return Basis("pca", shape, spectrum=spec, power=spec.eigenvalues)
    xc = x - x.mean(axis=0)
    if kind == "fourier":
        power = np.mean(np.abs(bases.fft_images(xc)) ** 2, axis=0)
        return Basis("fourier", shape, power=power)
    pyr = bases.dwt2(xc, levels)
    power = np.array([np.sum(b ** 2) / x.shape[0] for b in pyr.blocks])
    return Basis("wavelet", shape, power=power, levels=levels)


def basis_for_shape(kind: str, image_shape, levels: int = 2) -> Basis:
    """A data-free Fourier or wavelet basis (power fractions unavailable)."""
    if kind == "pca":
        raise ConfigError("a PCA basis must be fitted to data")
    shape = tuple(image_shape)
    if len(shape) == 2:
        shape = shape + (1,)
    return Basis(kind, shape, levels=levels)


# --- gains -------------------------------------------------------------------


def _index_gain(ranges, n: int) -> np.ndarray:
    g = np.zeros(n)
    for lo, hi in ranges:
        if lo > n or (hi is not None and hi > n):
            raise IndexOutOfRange(f"band range [{lo}, {hi}) exceeds {n} basis elements")
        g[max(lo, 0):n if hi is None else hi] = 1.0
    return g


def band_gain(spec: BandSpec, basis: Basis):
    """Coefficient gain of ``spec`` in ``basis`` (array, or FrequencyMask for Fourier)."""
    if spec.basis != basis.kind:
        raise BasisShapeMismatch(f"{spec.basis} band applied to a {basis.kind} basis")
    if basis.kind == "pca":
        return _index_gain(spec.ranges(), basis.dim)
    if basis.kind == "wavelet":
        return _index_gain(spec.ranges(), 3 * basis.levels + 1)
    h, w = basis.image_shape[:2]
    if spec.filter == "sinc":
        return bases.sinc_mask(h, w, spec.params[0])
    if spec.smoothing == "box":
        keep = np.zeros((h, w), dtype=bool)
        for lo, hi in spec.ranges():
            keep |= bases.box_range_mask(h, w, lo, hi)
        return bases.FrequencyMask(keep.astype(np.float64), "box")
    if spec.smoothing == "phase":
        keep = np.zeros((h, w), dtype=bool)
        for lo, hi in spec.ranges():
            keep |= bases.box_range_mask(h, w, lo, hi)
        return bases.FrequencyMask(keep.astype(np.float64), "phase")
    r = bases.radius(h, w)
    g = np.zeros_like(r)
    for lo, hi in spec.ranges():
        g = np.maximum(g, bases.butterworth_range_gain(r, lo, hi, spec.order))
    return bases.FrequencyMask(g, "butterworth")


def union_gain(specs, basis: Basis):
    """Gain of the union of several bands (elementwise maximum)."""
    specs = list(specs)
    if not specs:
        return empty_gain(basis)
    gains = [band_gain(s, basis) for s in specs]
    if basis.kind != "fourier":
        return np.maximum.reduce(gains)
    if any(g.kind == "phase" for g in gains):
        raise ConfigError("phase masks cannot be combined into a union")
    return bases.FrequencyMask(np.maximum.reduce([g.gain for g in gains]), "union")


def empty_gain(basis: Basis):
    if basis.kind == "pca":
        return np.zeros(basis.dim)
    if basis.kind == "wavelet":
        return np.zeros(3 * basis.levels + 1)
    return bases.FrequencyMask(np.zeros(basis.image_shape[:2]), "box")


def _is_empty(gain) -> bool:
    g = gain.gain if isinstance(gain, bases.FrequencyMask) else gain
    if isinstance(gain, bases.FrequencyMask) and gain.kind == "phase":
        return False
    return not np.any(g > 0)


def _box_keep(spec: BandSpec, basis: Basis):
    """Boolean selection of the box version of a band, per coefficient index."""
    if spec.filter == "sinc":
        g = band_gain(spec, basis).gain
        return g >= SQRT_HALF
    g = band_gain(spec.box(), basis)
    return (g.gain if isinstance(g, bases.FrequencyMask) else g) > 0


# --- projections ---------------------------------------------------------------


def _check_shape(x: np.ndarray, basis: Basis):
    if tuple(x.shape[-3:]) != tuple(basis.image_shape):
        raise BasisShapeMismatch(
            f"image shape {x.shape[-3:]} does not match basis shape {basis.image_shape}"
        )


def apply_gain(x: np.ndarray, gain, basis: Basis, with_mean: bool = True) -> np.ndarray:
    """Project images of shape (..., H, W, C) through a coefficient gain.

    For PCA the data mean is removed before projection and, when
    ``with_mean`` is true, added back afterwards. Fourier and wavelet
    projections are linear and ignore ``with_mean``.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_shape(x, basis)
    if basis.kind == "pca":
        spec = basis.spectrum
        lead = x.shape[:-3]
        flat = x.reshape(-1, basis.dim) - spec.mean
        sel = np.flatnonzero(gain)
        u = spec.eigenvectors[:, sel]
        out = ((flat @ u) * gain[sel]) @ u.T
        if with_mean:
            out = out + spec.mean
        return out.reshape(lead + tuple(basis.image_shape))
    if basis.kind == "fourier":
        return gain.filter(x)
    pyr = bases.dwt2(x, basis.levels)
    blocks = [b * g for b, g in zip(pyr.blocks, gain)]
    return bases.idwt2(pyr, blocks)


def project_band(image, spec: BandSpec, basis: Basis, with_mean: bool = True) -> TensorImage:
    return TensorImage(apply_gain(as_array(image), band_gain(spec, basis), basis, with_mean))


def project_dataset(dataset: LabeledDataset, spec: BandSpec, basis: Basis) -> LabeledDataset:
    """Project every sample; targets pass through unchanged.

    An empty band collapses every sample to the mean image (PCA) or to zero
    (Fourier, wavelet); ``meta["empty_band"]`` flags it.
    """
    gain = band_gain(spec, basis)
    out = apply_gain(dataset.images, gain, basis)
    return dataset.with_images(out, band=str(spec), empty_band=_is_empty(gain))


def project_union(dataset: LabeledDataset, specs, basis: Basis) -> LabeledDataset:
    gain = union_gain(specs, basis)
    out = apply_gain(dataset.images, gain, basis)
    return dataset.with_images(out, band="+".join(str(s) for s in specs), empty_band=_is_empty(gain))


# --- statistics ------------------------------------------------------------------


@dataclass(frozen=True)
class BandStats:
    feature_count: int
    power_fraction: float


def band_stats(spec: BandSpec, basis: Basis) -> BandStats:
    """Basis-element count and power share of the box version of a band.

    ``power_fraction`` is NaN when the basis was built without data.
    """
    keep = _box_keep(spec, basis)
    if basis.kind == "pca":
        count = int(keep.sum())
    elif basis.kind == "fourier":
        count = int(keep.sum()) * basis.image_shape[2]
    else:
        sizes = _wavelet_block_sizes(basis)
        count = int(sizes[keep].sum())
    if basis.power is None:
        return BandStats(count, float("nan"))
    power = np.asarray(basis.power)
    if basis.kind == "fourier":
        power = power.sum(axis=-1)
    total = power.sum()
    frac = float(power[keep].sum() / total) if total > 0 else 0.0
    return BandStats(count, min(max(frac, 0.0), 1.0))


def _wavelet_block_sizes(basis: Basis) -> np.ndarray:
    probe = bases.dwt2(np.zeros(basis.image_shape), basis.levels)
    return np.array([b.size for b in probe.blocks])


def index_partition(kind: str, total: int, n_bands: int) -> list[BandSpec]:
    """Split ``total`` indices into contiguous bands; the remainder joins the last band."""
    if not 1 <= n_bands <= total:
        raise ConfigError(f"cannot split {total} indices into {n_bands} bands")
    width = total // n_bands
    edges = [k * width for k in range(n_bands)] + [total]
    return [BandSpec.range(kind, edges[k], edges[k + 1], **({"smoothing": "box"} if kind == "fourier" else {}))
            for k in range(n_bands)]


def default_partition(basis: Basis, n_bands: int | None = None) -> list[BandSpec]:
    """Disjoint box bands covering the whole basis."""
    total = basis.num_indices()
    return index_partition(basis.kind, total, n_bands or total)
