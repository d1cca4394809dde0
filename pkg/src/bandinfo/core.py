"""Core data types, covariance spectra and the SRT1 tensor container."""

from __future__ import annotations

import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    AllZeroSpectrum,
    BadMagic,
    DataError,
    DimensionTooLarge,
    EmptyDataset,
    IndexOutOfRange,
    LabelOutOfRange,
    NumericalError,
    TruncatedPayload,
    UnsupportedDtype,
)

MAX_PCA_DIM = 16384
# eigenvalues this far below zero (relative to the largest) are treated as round-off
NEGATIVE_EIG_TOL = 1e-10
RANK_TOL = 1e-12


@dataclass(frozen=True)
class TensorImage:
    """An H x W x C real image stored row-major as float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DataError(f"expected an (H, W, C) image, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("image contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def as_array(image) -> np.ndarray:
    """Return the (H, W, C) float array behind a TensorImage or array-like."""
    if isinstance(image, TensorImage):
        return image.data
    arr = np.asarray(image, dtype=np.float64)
    return arr[:, :, None] if arr.ndim == 2 else arr


@dataclass
class LabeledDataset:
    """Images stacked as (n, H, W, C) with categorical or dense targets.

    Categorical targets are an int array of shape (n,). Dense targets are a
    float array of shape (n, H', W', C'); ``valid`` optionally marks the
    pixels of a dense target that carry ground truth, shape (n, H', W').
    """

    images: np.ndarray
    targets: np.ndarray
    num_classes: int | None = None
    valid: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim == 3:
            images = images[..., None]
        if images.ndim != 4:
            raise DataError(f"images must be (n, H, W, C), got {images.shape}")
        if images.shape[0] == 0:
            raise EmptyDataset("dataset has no samples")
        if not np.all(np.isfinite(images)):
            raise DataError("images contain NaN or Inf")
        self.images = images
        targets = np.asarray(self.targets)
        if targets.shape[0] != images.shape[0]:
            raise DataError("targets and samples differ in count")
        if targets.ndim == 1:
            if not np.issubdtype(targets.dtype, np.integer):
                if not np.all(targets == np.round(targets)):
                    raise DataError("categorical labels must be integers")
            targets = targets.astype(np.int64)
            k = self.num_classes if self.num_classes is not None else int(targets.max()) + 1
            if targets.min() < 0 or targets.max() >= k:
                raise LabelOutOfRange(f"labels must lie in [0, {k})")
            self.num_classes = k
        else:
            targets = np.asarray(targets, dtype=np.float64)
            if targets.ndim == 3:
                targets = targets[..., None]
            if self.valid is not None:
                self.valid = np.asarray(self.valid, dtype=bool)
                if self.valid.shape != targets.shape[:3]:
                    raise DataError("valid mask must match target (n, H, W)")
        self.targets = targets

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def categorical(self) -> bool:
        return self.targets.ndim == 1

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    @property
    def dim(self) -> int:
        return int(np.prod(self.image_shape))

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def sample(self, i: int) -> TensorImage:
        return TensorImage(self.images[i])

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.images[idx],
            self.targets[idx],
            num_classes=self.num_classes,
            valid=None if self.valid is None else self.valid[idx],
            meta=dict(self.meta),
        )

    def with_images(self, images: np.ndarray, **meta) -> "LabeledDataset":
        return LabeledDataset(
            images.reshape(self.images.shape) if images.ndim == 2 else images,
            self.targets,
            num_classes=self.num_classes,
            valid=self.valid,
            meta={**self.meta, **meta},
        )


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Mean, descending eigenvalues and matching orthonormal eigenvector columns."""

    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def total_variance(self) -> float:
        return float(self.eigenvalues.sum())

    def covariance(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, LabeledDataset):
        return data.flat()
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise EmptyDataset("cannot fit PCA on zero samples")
    return x.reshape(x.shape[0], -1)


def eigh_descending(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition, sorted descending, with round-off clamping."""
    lam, u = np.linalg.eigh(sigma)
    lam, u = lam[::-1].copy(), u[:, ::-1].copy()
    top = max(float(lam[0]), 0.0)
    neg = lam < 0
    if np.any(neg):
        if np.any(-lam[neg] > NEGATIVE_EIG_TOL * top) and top > 0:
            raise NumericalError(
                f"covariance has a negative eigenvalue {lam.min():.3e} beyond round-off"
            )
        lam[neg] = 0.0
    return lam, u


def fit_pca(dataset, max_dim: int = MAX_PCA_DIM) -> CovarianceSpectrum:
    """Eigendecompose the 1/n sample covariance of flattened samples.

    Accepts a LabeledDataset or an (n, ...) array of samples.
    """
    x = _as_matrix(dataset)
    n, d = x.shape
    if n == 0:
        raise EmptyDataset("cannot fit PCA on zero samples")
    if d > max_dim:
        raise DimensionTooLarge(
            f"flattened dimension {d} exceeds {max_dim}; subsample or tile the input"
        )
    mean = x.mean(axis=0)
    xc = x - mean
    sigma = xc.T @ xc / n
    lam, u = eigh_descending(sigma)
    return CovarianceSpectrum(mean=mean, eigenvalues=lam, eigenvectors=u)


def explained_variance(spectrum: CovarianceSpectrum, i: int) -> float:
    """Fraction of total variance captured by the leading ``i`` eigenvectors.

    Returns 0.0 with a RuntimeWarning when the spectrum carries no variance.
    """
    d = spectrum.eigenvalues.shape[0]
    if not 1 <= i <= d:
        raise IndexOutOfRange(f"i must lie in [1, {d}], got {i}")
    total = spectrum.eigenvalues.sum()
    if total <= 0:
        warnings.warn("spectrum has zero total variance", RuntimeWarning, stacklevel=2)
        return 0.0
    if i == d:
        return 1.0
    return float(min(spectrum.eigenvalues[:i].sum() / total, 1.0))


def condition_number(spectrum_or_eigenvalues) -> float:
    """lambda_max / lambda_min, or ``math.inf`` when the spectrum is rank deficient."""
    lam = getattr(spectrum_or_eigenvalues, "eigenvalues", spectrum_or_eigenvalues)
    lam = np.asarray(lam, dtype=np.float64)
    top = lam.max() if lam.size else 0.0
    if top <= 0:
        raise AllZeroSpectrum("all eigenvalues are zero")
    if np.any(lam < RANK_TOL * top):
        return math.inf
    return float(top / lam.min())


# --- SRT1 container ---------------------------------------------------------

MAGIC = b"SRT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


def encode_array(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    tag = _TAGS.get(arr.dtype)
    if tag is None:
        raise UnsupportedDtype(f"cannot store dtype {arr.dtype}")
    if arr.ndim > 255:
        raise DataError("rank exceeds 255")
    header = MAGIC + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<B", tag)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()


def decode_array(buf: bytes) -> np.ndarray:
    if len(buf) < 5 or buf[:4] != MAGIC:
        raise BadMagic("not an SRT1 tensor file")
    rank = buf[4]
    off = 5 + 4 * rank
    if len(buf) < off + 1:
        raise TruncatedPayload("header ends before the dtype tag")
    dims = struct.unpack(f"<{rank}I", buf[5:off])
    tag = buf[off]
    if tag not in _DTYPES:
        raise UnsupportedDtype(f"unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = buf[off + 1:]
    if len(payload) < need:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, header implies {need}")
    if len(payload) > need:
        raise DataError(f"{len(payload) - need} trailing bytes after payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_array(path, arr: np.ndarray) -> None:
    atomic_write_bytes(path, encode_array(arr))


def read_array(path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def write_tensor(path, image, dtype=np.float64) -> None:
    write_array(path, np.asarray(as_array(image), dtype=dtype))


def read_tensor(path) -> TensorImage:
    arr = read_array(path)
    if arr.ndim not in (2, 3):
        raise DataError(f"expected a rank-2 or rank-3 image, file holds rank {arr.ndim}")
    return TensorImage(arr.astype(np.float64))
