"""Small predictors used to measure how much task signal a band carries.

Three probe kinds are provided: a multinomial logistic regression and a
one-hidden-layer MLP for class labels, and ridge regression for dense
targets. Inputs are standardized with statistics of the training split only.

The sweeps split a dataset once (seeded), fit the basis on the training part
and then train or evaluate probes on projected copies of both parts.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy import linalg, optimize, special
from sklearn.model_selection import train_test_split

from .bands import BandSpec, Basis, band_stats, fit_basis, project_dataset
from .core import LabeledDataset
from .errors import (
    ConfigError,
    DegenerateLabels,
    MetricTargetMismatch,
    NonFiniteLoss,
    SingularRidgeSystem,
)

PROBE_KINDS = ("logistic", "mlp", "ridge")
METRICS = ("accuracy", "mae", "aee")
SWEEP_COLUMNS = ("band", "metric", "value", "feature_count", "power_fraction", "seed")


@dataclass
class ProbeConfig:
    kind: str = "logistic"
    l2: float = 1e-4
    max_iter: int = 1000
    tol: float = 1e-5
    ridge: float = 1e-3
    hidden: int = 32
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 64
    test_fraction: float = 0.3
    metric: str | None = None

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.metric is not None and self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")


@dataclass
class ProbeModel:
    kind: str
    weights: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    config: ProbeConfig
    seed: int
    num_classes: int | None = None
    target_shape: tuple | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def normalize(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
        return (x - self.mean) / self.std

    def linear_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Weights and bias of a linear probe expressed in raw input units."""
        if self.kind == "mlp":
            raise ConfigError("an MLP has no linear coefficients")
        w = self.weights["w"] / self.std[:, None]
        b = self.weights["b"] - self.mean @ w
        return w, b


def _standardize(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0
    return mean, std


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _fit_logistic(x, y, k, cfg: ProbeConfig):
    n, d = x.shape
    onehot = np.eye(k)[y]

    def loss_grad(theta):
        w = theta[: d * k].reshape(d, k)
        b = theta[d * k:]
        z = x @ w + b
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -np.sum(onehot * logp) / n + 0.5 * cfg.l2 * np.sum(w * w)
        g = (np.exp(logp) - onehot) / n
        gw = x.T @ g + cfg.l2 * w
        return loss, np.concatenate([gw.ravel(), g.sum(axis=0)])

    res = optimize.minimize(loss_grad, np.zeros(d * k + k), jac=True, method="L-BFGS-B",
                            options={"maxiter": cfg.max_iter, "gtol": cfg.tol})
    if not np.isfinite(res.fun):
        raise NonFiniteLoss("logistic loss diverged")
    theta = res.x
    info = {"iterations": int(res.nit), "loss": float(res.fun),
            "grad_norm": float(np.abs(res.jac).max()), "converged": bool(res.success)}
    return {"w": theta[: d * k].reshape(d, k), "b": theta[d * k:]}, info


def _fit_ridge(x, y, lam):
    # the bias is left unpenalized by centering both sides
    xm, ym = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - xm, y - ym
    a = xc.T @ xc + lam * np.eye(x.shape[1])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            w = linalg.solve(a, xc.T @ yc, assume_a="pos")
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError) as exc:
        raise SingularRidgeSystem(f"ridge normal equations are singular (lambda={lam})") from exc
    if not np.all(np.isfinite(w)):
        raise SingularRidgeSystem("ridge solution is not finite")
    return {"w": w, "b": ym - xm @ w}


def _fit_mlp(x, y, k, cfg: ProbeConfig, seed: int):
    rng = np.random.default_rng(seed)
    n, d = x.shape
    out = 1 if k == 2 else k
    params = {
        "w1": rng.normal(size=(d, cfg.hidden)) * np.sqrt(2.0 / d),
        "b1": np.zeros(cfg.hidden),
        "w2": rng.normal(size=(cfg.hidden, out)) * np.sqrt(1.0 / cfg.hidden),
        "b2": np.zeros(out),
    }
    target = y[:, None].astype(float) if out == 1 else np.eye(k)[y]
    m = {key: np.zeros_like(v) for key, v in params.items()}
    v2 = {key: np.zeros_like(v) for key, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, tb = x[idx], target[idx]
            h_pre = xb @ params["w1"] + params["b1"]
            h = np.maximum(h_pre, 0.0)
            z = h @ params["w2"] + params["b2"]
            if out == 1:
                p = special.expit(z)
                total += float(np.sum(np.logaddexp(0, z) - tb * z))
            else:
                p = _softmax(z)
                total += float(-np.sum(tb * np.log(np.clip(p, 1e-300, None))))
            g = (p - tb) / len(idx)
            gh = (g @ params["w2"].T) * (h_pre > 0)
            grads = {"w2": h.T @ g, "b2": g.sum(axis=0), "w1": xb.T @ gh, "b1": gh.sum(axis=0)}
            step += 1
            for key in params:
                m[key] = beta1 * m[key] + (1 - beta1) * grads[key]
                v2[key] = beta2 * v2[key] + (1 - beta2) * grads[key] ** 2
                mhat = m[key] / (1 - beta1 ** step)
                vhat = v2[key] / (1 - beta2 ** step)
                params[key] = params[key] - cfg.lr * mhat / (np.sqrt(vhat) + eps)
        if not np.isfinite(total):
            raise NonFiniteLoss("MLP loss became non-finite")
    return params, {"final_loss": total / n, "steps": step}


def _mlp_logits(params, x):
    h = np.maximum(x @ params["w1"] + params["b1"], 0.0)
    return h @ params["w2"] + params["b2"]


def train_probe(dataset: LabeledDataset, config: ProbeConfig | None = None, seed: int = 0) -> ProbeModel:
    cfg = config or ProbeConfig()
    x_raw = dataset.flat()
    mean, std = _standardize(x_raw)
    x = (x_raw - mean) / std
    if cfg.kind == "ridge":
        if dataset.categorical:
            raise MetricTargetMismatch("ridge probes need dense targets")
        y = dataset.targets.reshape(len(dataset), -1).copy()
        if dataset.valid is not None:
            # pixels without ground truth take the column mean of the labelled ones
            mask = np.repeat(dataset.valid[..., None], dataset.targets.shape[-1], axis=-1)
            mask = mask.reshape(len(dataset), -1)
            counts = np.maximum(mask.sum(axis=0), 1)
            fill = np.where(mask, y, 0.0).sum(axis=0) / counts
            y = np.where(mask, y, fill)
        weights = _fit_ridge(x, y, cfg.ridge)
        return ProbeModel("ridge", weights, mean, std, cfg, seed,
                          target_shape=dataset.targets.shape[1:], info={"lambda": cfg.ridge})
    if not dataset.categorical:
        raise MetricTargetMismatch(f"{cfg.kind} probes need class labels")
    if np.unique(dataset.targets).size < 2:
        raise DegenerateLabels("training split has a single class")
    k = dataset.num_classes
    if cfg.kind == "logistic":
        weights, info = _fit_logistic(x, dataset.targets, k, cfg)
    else:
        weights, info = _fit_mlp(x, dataset.targets, k, cfg, seed)
    info = {**info, "l2": cfg.l2} if cfg.kind == "logistic" else info
    return ProbeModel(cfg.kind, weights, mean, std, cfg, seed, num_classes=k, info=info)


def predict(model: ProbeModel, images: np.ndarray) -> np.ndarray:
    """Class labels for classifiers, dense predictions for ridge."""
    x = model.normalize(images)
    if model.kind == "ridge":
        y = x @ model.weights["w"] + model.weights["b"]
        return y.reshape((len(x),) + tuple(model.target_shape))
    if model.kind == "logistic":
        return np.argmax(x @ model.weights["w"] + model.weights["b"], axis=1)
    z = _mlp_logits(model.weights, x)
    if z.shape[1] == 1:
        return (z[:, 0] > 0).astype(np.int64)
    return np.argmax(z, axis=1)


# --- metrics -------------------------------------------------------------------


def accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def _pixel_mask(target: np.ndarray, valid):
    if valid is None:
        return np.ones(target.shape[:3], dtype=bool)
    return np.asarray(valid, dtype=bool)


def mae(pred, target, valid=None) -> float:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    mask = _pixel_mask(target, valid)
    if not mask.any():
        raise MetricTargetMismatch("no valid pixels")
    return float(np.mean(np.abs(pred - target)[mask]))


def aee(pred, target, valid=None) -> float:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if target.shape[-1] != 2:
        raise MetricTargetMismatch("AEE needs 2-channel flow targets")
    mask = _pixel_mask(target, valid)
    if not mask.any():
        raise MetricTargetMismatch("no valid pixels")
    err = np.sqrt(np.sum((pred - target) ** 2, axis=-1))
    return float(np.mean(err[mask]))


def default_metric(dataset: LabeledDataset) -> str:
    if dataset.categorical:
        return "accuracy"
    return "aee" if dataset.targets.shape[-1] == 2 else "mae"


def evaluate(model: ProbeModel, dataset: LabeledDataset, metric: str | None = None) -> float:
    metric = metric or default_metric(dataset)
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    if (metric == "accuracy") != dataset.categorical:
        raise MetricTargetMismatch(f"metric {metric} does not fit these targets")
    pred = predict(model, dataset.images)
    if metric == "accuracy":
        return accuracy(pred, dataset.targets)
    if metric == "mae":
        return mae(pred, dataset.targets, dataset.valid)
    return aee(pred, dataset.targets, dataset.valid)


# --- sweeps ----------------------------------------------------------------------


def split_dataset(dataset: LabeledDataset, test_fraction: float, seed: int):
    """Seeded disjoint train/test split, stratified for class labels."""
    idx = np.arange(len(dataset))
    strat = dataset.targets if dataset.categorical else None
    train, test = train_test_split(idx, test_size=test_fraction, random_state=seed, stratify=strat)
    return dataset.subset(np.sort(train)), dataset.subset(np.sort(test))


@dataclass
class SweepRow:
    band: str
    metric: str
    value: float
    feature_count: int
    power_fraction: float
    seed: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    meta: dict[str, Any] = field(default_factory=dict)

    def values(self, metric: str | None = None) -> list[float]:
        return [r.value for r in self.rows if metric is None or r.metric == metric]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow([r.band, r.metric, repr(float(r.value)), r.feature_count,
                        repr(float(r.power_fraction)), r.seed])
        return buf.getvalue()

    def as_dicts(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


class _BasisCache:
    def __init__(self, train: LabeledDataset, levels: int = 2):
        self.train, self.levels, self.fits = train, levels, {}

    def __call__(self, kind: str) -> Basis:
        if kind not in self.fits:
            self.fits[kind] = fit_basis(kind, self.train, self.levels)
        return self.fits[kind]


def band_predictivity_sweep(dataset: LabeledDataset, specs, config: ProbeConfig | None = None,
                            seed: int = 0, bases: dict | None = None) -> SweepReport:
    """Train a fresh probe per band on projected training data and score it on projected test data."""
    cfg = config or ProbeConfig()
    train, test = split_dataset(dataset, cfg.test_fraction, seed)
    get = _BasisCache(train)
    if bases:
        get.fits.update(bases)
    metric = cfg.metric or default_metric(dataset)
    rows = []
    for spec in specs:
        basis = get(spec.basis)
        tr, te = project_dataset(train, spec, basis), project_dataset(test, spec, basis)
        model = train_probe(tr, cfg, seed)
        st = band_stats(spec, basis)
        rows.append(SweepRow(str(spec), metric, evaluate(model, te, metric), st.feature_count,
                             st.power_fraction, seed))
    return SweepReport(rows, {"probe": asdict(cfg), "n_train": len(train), "n_test": len(test)})


def band_sensitivity_sweep(dataset: LabeledDataset, specs, config: ProbeConfig | None = None,
                           seed: int = 0, model: ProbeModel | None = None,
                           bases: dict | None = None) -> SweepReport:
    """Score one probe trained on unprojected data against projected test data.

    For dense targets each band also gets a ``<metric>_differential`` row: the
    error of the full-data probe on that band minus the error of a probe
    trained on the band itself.
    """
    cfg = config or ProbeConfig()
    train, test = split_dataset(dataset, cfg.test_fraction, seed)
    get = _BasisCache(train)
    if bases:
        get.fits.update(bases)
    if model is None:
        model = train_probe(train, cfg, seed)
    metric = cfg.metric or default_metric(dataset)
    rows = []
    for spec in specs:
        basis = get(spec.basis)
        te = project_dataset(test, spec, basis)
        st = band_stats(spec, basis)
        value = evaluate(model, te, metric)
        rows.append(SweepRow(str(spec), metric, value, st.feature_count, st.power_fraction, seed))
        if not dataset.categorical:
            own = train_probe(project_dataset(train, spec, basis), cfg, seed)
            diff = value - evaluate(own, te, metric)
            rows.append(SweepRow(str(spec), f"{metric}_differential", diff, st.feature_count,
                                 st.power_fraction, seed))
    return SweepReport(rows, {"probe": asdict(cfg), "n_train": len(train), "n_test": len(test)})


# --- synthetic dense tasks ----------------------------------------------------------


def _smooth_field(rng, n, h, w, scale: float) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    envelope = np.exp(-(fx ** 2 + fy ** 2) / (2 * scale ** 2))
    noise = rng.normal(size=(n, h, w))
    out = np.fft.ifft2(np.fft.fft2(noise) * envelope).real
    return out / out.std(axis=(1, 2), keepdims=True)


def translating_texture(n: int = 400, size: int = 16, max_shift: float = 1.5, seed: int = 0,
                        invalid_fraction: float = 0.05) -> LabeledDataset:
    """Frame pairs of a smooth texture and its circular sub-pixel translation.

    Images stack the two frames as channels; targets hold the constant
    ground-truth flow (u, v) at every pixel.
    """
    rng = np.random.default_rng(seed)
    tex = _smooth_field(rng, n, size, size, 0.12)
    shift = rng.uniform(-max_shift, max_shift, size=(n, 2))
    ky = np.fft.fftfreq(size)[:, None]
    kx = np.fft.fftfreq(size)[None, :]
    phase = np.exp(-2j * np.pi * (kx[None] * shift[:, 0, None, None] + ky[None] * shift[:, 1, None, None]))
    moved = np.fft.ifft2(np.fft.fft2(tex) * phase).real
    images = np.stack([tex, moved], axis=-1)
    flow = np.broadcast_to(shift[:, None, None, :], (n, size, size, 2)).copy()
    valid = rng.random((n, size, size)) >= invalid_fraction
    return LabeledDataset(images, flow, valid=valid, meta={"generator": "flow"})


def depth_scenes(n: int = 400, size: int = 16, noise: float = 0.05, seed: int = 0,
                 invalid_fraction: float = 0.1) -> LabeledDataset:
    """Smooth depth maps rendered as intensity plus a shading term from the depth gradient."""
    rng = np.random.default_rng(seed)
    depth = 2.0 + _smooth_field(rng, n, size, size, 0.08)
    gy, gx = np.gradient(depth, axis=(1, 2))
    image = 0.5 * depth + 0.8 * (gx + 0.5 * gy) + noise * rng.normal(size=depth.shape)
    valid = rng.random((n, size, size)) >= invalid_fraction
    return LabeledDataset(image[..., None], depth[..., None], valid=valid, meta={"generator": "depth"})
