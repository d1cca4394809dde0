"""Orthonormal 2-D DFT, Daubechies-4 DWT and frequency-domain masks.

Spatial axes are always the H and W axes of an ``(..., H, W, C)`` array, so
every transform here works on a single image and on a stacked dataset alike.

The DFT uses the orthonormal 1/sqrt(H*W) scaling in both directions so that
Parseval's identity holds without bookkeeping. Frequencies are the signed
integers of ``np.fft.fftfreq(n) * n`` (cycles per image), DC sits at index
(0, 0), and for even sizes the Nyquist bin carries frequency -n/2, which the
radial distance treats as magnitude n/2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pywt

from .core import TensorImage, as_array
from .errors import ConfigError, EmptyBandList, ImageTooSmall

SPATIAL = (-3, -2)
WAVELET = "db4"


# --- DFT --------------------------------------------------------------------


@dataclass(frozen=True)
class DftSpectrum:
    coeffs: np.ndarray  # complex, (H, W, C)

    @property
    def shape(self):
        return self.coeffs.shape

    def power(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2


def fft_images(x: np.ndarray) -> np.ndarray:
    return np.fft.fft2(x, axes=SPATIAL, norm="ortho")


def ifft_images(c: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(c, axes=SPATIAL, norm="ortho")


def dft2(image) -> DftSpectrum:
    return DftSpectrum(fft_images(as_array(image)))


def idft2(spectrum: DftSpectrum | np.ndarray, real: bool = True):
    """Inverse transform; ``real=False`` returns the raw complex array."""
    coeffs = spectrum.coeffs if isinstance(spectrum, DftSpectrum) else spectrum
    out = ifft_images(coeffs)
    return TensorImage(out.real) if real else out


def signed_frequencies(n: int) -> np.ndarray:
    return np.rint(np.fft.fftfreq(n) * n).astype(np.int64)


def radius_squared(height: int, width: int) -> np.ndarray:
    """Integer squared radial frequency on the (H, W) DFT grid."""
    w1 = signed_frequencies(height)[:, None]
    w2 = signed_frequencies(width)[None, :]
    return w1 * w1 + w2 * w2


def radius(height: int, width: int) -> np.ndarray:
    return np.sqrt(radius_squared(height, width).astype(np.float64))


def max_radial_index(height: int, width: int) -> int:
    """Largest i with a nonempty radial band on this grid."""
    return int(np.floor(radius(height, width).max()))


# --- masks ------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyMask:
    """Per-frequency gain on the DFT grid.

    ``kind == "phase"`` marks a hard 0/1 mask applied to phase rather than
    amplitude: frequencies with gain 0 keep their magnitude but lose their
    phase.
    """

    gain: np.ndarray  # (H, W), values in [0, 1]
    kind: str

    @property
    def shape(self):
        return self.gain.shape

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        g = self.gain[:, :, None]
        if self.kind == "phase":
            return np.where(g > 0.5, coeffs, np.abs(coeffs))
        return coeffs * g

    def filter(self, x: np.ndarray) -> np.ndarray:
        """Filter real images of shape (..., H, W, C) and return the real part."""
        return ifft_images(self.apply(fft_images(x))).real


def box_range_mask(height: int, width: int, lo: float, hi: float | None) -> np.ndarray:
    """Boolean grid of frequencies with lo <= r < hi (``hi=None`` means no bound)."""
    r2 = radius_squared(height, width)
    keep = r2 >= (max(lo, 0) ** 2)
    if hi is not None:
        keep &= r2 < hi * hi
    return keep


def radial_band_mask(height: int, width: int, i: int) -> FrequencyMask:
    if i < 0:
        raise ConfigError("radial index must be non-negative")
    return FrequencyMask(box_range_mask(height, width, i, i + 1).astype(np.float64), "box")


def butterworth_gain(r, cutoff: float, order: int = 5, kind: str = "low") -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if cutoff <= 0:
        raise ConfigError("Butterworth cutoff must be positive")
    if kind == "low":
        return 1.0 / np.sqrt(1.0 + (r / cutoff) ** (2 * order))
    if kind == "high":
        with np.errstate(divide="ignore"):
            ratio = np.where(r > 0, cutoff / np.where(r > 0, r, 1.0), np.inf)
        return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))
    raise ConfigError(f"unknown Butterworth kind {kind!r}")


def butterworth_mask(height: int, width: int, cutoff: float, order: int = 5,
                     kind: str = "low") -> FrequencyMask:
    return FrequencyMask(butterworth_gain(radius(height, width), cutoff, order, kind), "butterworth")


def butterworth_range_gain(r, lo: float, hi: float | None, order: int = 5) -> np.ndarray:
    """Smooth version of lo <= r < hi: a high pass at lo times a low pass at hi."""
    g = np.ones_like(np.asarray(r, dtype=np.float64))
    if lo > 0:
        g = g * butterworth_gain(r, lo, order, "high")
    if hi is not None:
        if hi <= 0:
            return np.zeros_like(g)
        g = g * butterworth_gain(r, hi, order, "low")
    return g


def centered_range(center: int, width: int) -> tuple[int, int]:
    """Half-open index range of ``width`` elements around ``center``."""
    if width < 1:
        raise ConfigError("band width must be at least 1")
    start = center - width // 2
    return start, start + width


def sinc_mask(height: int, width: int, k: float) -> FrequencyMask:
    if k <= 0:
        raise ConfigError("sinc frequency must be positive")
    # np.sinc(x) = sin(pi x) / (pi x)
    g = np.abs(np.sinc(k * radius(height, width) / np.pi))
    return FrequencyMask(np.clip(g, 0.0, 1.0), "sinc")


def random_union_mask(height: int, width: int, bands, order: int = 5) -> FrequencyMask:
    """Max over Butterworth band passes, one per (center, width) pair."""
    bands = list(bands)
    if not bands:
        raise EmptyBandList("random union needs at least one (center, width) pair")
    r = radius(height, width)
    g = np.zeros_like(r)
    for center, w in bands:
        lo, hi = centered_range(center, w)
        g = np.maximum(g, butterworth_range_gain(r, lo, hi, order))
    return FrequencyMask(g, "random_union")


def phase_mask(height: int, width: int, lo: float = 0, hi: float | None = None) -> FrequencyMask:
    """Hard phase mask: phase kept for lo <= r < hi, zeroed elsewhere."""
    return FrequencyMask(box_range_mask(height, width, lo, hi).astype(np.float64), "phase")


def special_mask(kind: str, height: int, width: int, **params) -> FrequencyMask:
    if kind == "sinc":
        return sinc_mask(height, width, params["k"])
    if kind == "phase":
        return phase_mask(height, width, params.get("lo", 0), params.get("hi"))
    if kind == "random_union":
        return random_union_mask(height, width, params.get("bands", ()), params.get("order", 5))
    raise ConfigError(f"unknown special mask {kind!r}")


# --- DWT --------------------------------------------------------------------

BLOCK_KINDS = ("cH", "cV", "cD")


def block_names(levels: int = 2) -> list[str]:
    """Blocks ordered coarse to fine: cA_L, (cH, cV, cD)_L, ..., (cH, cV, cD)_1."""
    names = [f"cA{levels}"]
    for lev in range(levels, 0, -1):
        names += [f"{k}{lev}" for k in BLOCK_KINDS]
    return names


@dataclass(frozen=True)
class WaveletPyramid:
    """Daubechies-4 periodized pyramid of an (..., H, W, C) array.

    ``blocks`` follow ``block_names(levels)``; scale index 0 is the coarsest
    approximation and the last index the finest diagonal detail.
    """

    blocks: list
    levels: int
    shape: tuple  # original (..., H, W, C)
    padded_shape: tuple
    wavelet: str = WAVELET

    def block(self, index: int) -> np.ndarray:
        return self.blocks[index]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[block_names(self.levels).index(name)]

    @property
    def size(self) -> int:
        return int(sum(b.size for b in self.blocks))


def _pad_to_multiple(x: np.ndarray, m: int) -> np.ndarray:
    h, w = x.shape[-3], x.shape[-2]
    ph, pw = (-h) % m, (-w) % m
    if ph == 0 and pw == 0:
        return x
    pad = [(0, 0)] * x.ndim
    pad[-3], pad[-2] = (0, ph), (0, pw)
    return np.pad(x, pad, mode="symmetric")


def dwt2(image, levels: int = 2) -> WaveletPyramid:
    x = as_array(image)
    h, w = x.shape[-3], x.shape[-2]
    if min(h, w) < 2 ** levels:
        raise ImageTooSmall(f"{h}x{w} image is too small for a {levels}-level DWT")
    xp = _pad_to_multiple(x, 2 ** levels)
    with warnings.catch_warnings():
        # periodization stays orthogonal even when blocks are shorter than the filter
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(xp, WAVELET, mode="periodization", level=levels, axes=SPATIAL)
    blocks = [coeffs[0]] + [b for detail in coeffs[1:] for b in detail]
    return WaveletPyramid(blocks, levels, x.shape, xp.shape)


def idwt2(pyramid: WaveletPyramid, blocks=None) -> np.ndarray:
    """Inverse DWT, cropped back to the original shape. ``blocks`` overrides the stored ones."""
    blocks = pyramid.blocks if blocks is None else blocks
    coeffs = [blocks[0]] + [tuple(blocks[1 + 3 * j: 4 + 3 * j]) for j in range(pyramid.levels)]
    x = pywt.waverec2(coeffs, WAVELET, mode="periodization", axes=SPATIAL)
    h, w = pyramid.shape[-3], pyramid.shape[-2]
    return x[..., :h, :w, :]
