"""Dataset loaders and seeded synthetic generators.

Sources are named as ``<format>:<argument>``:

``cifar-binary:<path>``  CIFAR-10 binary batch (1 label byte + 3072 planar pixels per record)
``tensor:<path>``        SRT1 container of shape (n, H, W, C), (H, W, C) or (H, W)
``wav:<path>``           16-bit PCM audio
``synthetic:<name>``     one of :data:`GENERATORS`
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import audio, probes, robust
from .core import LabeledDataset, read_array
from .errors import BadRecordLength, ConfigError, DataError, LabelOutOfRange

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)


def load_cifar_binary(path) -> LabeledDataset:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        raise BadRecordLength(f"{path}: {raw.size} bytes is not a multiple of {CIFAR_RECORD}")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise LabelOutOfRange(f"{path}: label {labels.max()} outside 0-9")
    images = rec[:, 1:].reshape((-1,) + CIFAR_SHAPE).transpose(0, 2, 3, 1) / 255.0
    return LabeledDataset(images, labels, num_classes=10, meta={"source": f"cifar-binary:{path}"})


def load_tensor(path, labels_path=None) -> LabeledDataset:
    arr = read_array(path).astype(np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :, None]
    elif arr.ndim == 3:
        arr = arr[None]
    elif arr.ndim != 4:
        raise DataError(f"{path}: expected rank 2-4, got rank {arr.ndim}")
    if labels_path:
        labels = read_array(labels_path).astype(np.int64).ravel()
        return LabeledDataset(arr, labels, meta={"source": f"tensor:{path}"})
    return LabeledDataset(arr, np.zeros(len(arr), dtype=np.int64), num_classes=1,
                          meta={"source": f"tensor:{path}", "unlabelled": True})


def digits() -> LabeledDataset:
    """The 8x8 handwritten digits bundled with scikit-learn, scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    d = load_digits()
    return LabeledDataset(d.images[..., None] / 16.0, d.target, num_classes=10, meta={"generator": "digits"})


def spiked(n: int = 2000, dim: int = 50, seed: int = 0) -> LabeledDataset:
    x = robust.spiked_data(n, dim, seed=seed)
    return LabeledDataset(x.reshape(n, 1, dim, 1), np.zeros(n, dtype=np.int64), num_classes=1,
                          meta={"generator": "spiked", "unlabelled": True})


def stationary_spectrum(size: int = 16) -> np.ndarray:
    """Anisotropic power spectrum on a size x size torus.

    The cross term breaks the symmetries (k1, k2) -> (k1, -k2) and
    (k1, k2) -> (k2, k1), so distinct conjugate pairs carry distinct power.
    """
    k = np.fft.fftfreq(size) * size
    k1, k2 = k[:, None], k[None, :]
    return 1.0 / (1.0 + 1.7 * k1 ** 2 + 3.0 * k2 ** 2 - 0.6 * k1 * k2) ** 1.5


def circulant(n: int = 4000, size: int = 16, seed: int = 0) -> LabeledDataset:
    """Stationary Gaussian fields with :func:`stationary_spectrum` as their power spectrum."""
    rng = np.random.default_rng(seed)
    power = stationary_spectrum(size)
    white = rng.normal(size=(n, size, size))
    x = np.fft.ifft2(np.fft.fft2(white) * np.sqrt(power)).real
    return LabeledDataset(x[..., None], np.zeros(n, dtype=np.int64), num_classes=1,
                          meta={"generator": "circulant", "unlabelled": True})


def pid2band(n: int = 20000, seed: int = 0) -> LabeledDataset:
    """2x2 images with independent coordinates of std (3, 2, 1, 0.5); label = [z0 > 0].

    With PCA bands [0, 2) and [2, 4) the first band holds all label
    information: I1 = -log(1 - 2/pi) / 2, I2 = 0.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 4)) * np.array([3.0, 2.0, 1.0, 0.5])
    y = (z[:, 0] > 0).astype(np.int64)
    return LabeledDataset(z.reshape(n, 2, 2, 1), y, num_classes=2, meta={"generator": "pid2band"})


def noise_images(n: int = 4, size: int = 128, sigma: float = 2.0, seed: int = 0) -> LabeledDataset:
    imgs = [robust.textured_image(size, sigma, seed=seed + i)[0] for i in range(n)]
    return LabeledDataset(np.stack(imgs), np.zeros(n, dtype=np.int64), num_classes=1,
                          meta={"generator": "noise", "true_variance": sigma ** 2, "unlabelled": True})


GENERATORS = {
    "digits": lambda seed, **kw: digits(),
    "spiked": lambda seed, **kw: spiked(seed=seed, **kw),
    "circulant": lambda seed, **kw: circulant(seed=seed, **kw),
    "pid2band": lambda seed, **kw: pid2band(seed=seed, **kw),
    "flow": lambda seed, **kw: probes.translating_texture(seed=seed, **kw),
    "depth": lambda seed, **kw: probes.depth_scenes(seed=seed, **kw),
    "noise": lambda seed, **kw: noise_images(seed=seed, **kw),
}
AUDIO_GENERATORS = {
    "twoclass-audio": lambda seed, **kw: audio.two_class_audio(seed=seed, **kw),
    "latent-pair": lambda seed, **kw: audio.latent_pair(seed=seed, **kw),
}


def split_source(source: str) -> tuple[str, str]:
    kind, sep, arg = source.partition(":")
    if not sep or not arg:
        raise ConfigError(f"source must look like <format>:<argument>, got {source!r}")
    return kind, arg


def load_source(source: str, seed: int = 0, options: dict | None = None) -> LabeledDataset:
    """Image dataset for a source string; ``options`` feed the synthetic generators."""
    kind, arg = split_source(source)
    options = dict(options or {})
    if kind == "cifar-binary":
        return load_cifar_binary(arg)
    if kind == "tensor":
        return load_tensor(arg, options.get("labels"))
    if kind == "synthetic":
        if arg not in GENERATORS:
            raise ConfigError(f"unknown image generator {arg!r}; choose from {sorted(GENERATORS)}")
        return GENERATORS[arg](seed, **{k: _number(v) for k, v in options.items()})
    raise ConfigError(f"source {source!r} does not provide images")


def load_audio_pair(source: str, seed: int = 0, options: dict | None = None, second: str | None = None):
    """Two signals for the SFA pipeline.

    Returns ``(kind, a, b, sample_rate)``; kind is ``"audio"`` for raw
    waveforms and ``"signal"`` for ready-made (d, T) channel signals.
    """
    kind, arg = split_source(source)
    options = dict(options or {})
    if kind == "wav":
        a, rate = audio.read_wav(arg)
        b = None
        if second:
            b, rate_b = audio.read_wav(second)
            if rate_b != rate:
                raise DataError("paired WAV files differ in sample rate")
        return "audio", a, b, float(rate)
    if kind == "synthetic" and arg in AUDIO_GENERATORS:
        out = AUDIO_GENERATORS[arg](seed, **{k: _number(v) for k, v in options.items()})
        if arg == "twoclass-audio":
            return "audio", out[0], out[1], float(out[2])
        return "signal", out[0], out[1], None
    raise ConfigError(f"source {source!r} does not provide audio")


def _number(text):
    if not isinstance(text, str):
        return text
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text
