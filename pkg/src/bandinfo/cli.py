"""Command-line experiment runner.

Every run writes into its output directory:

``report.csv``          long-format rows (column order fixed per command, see ``COLUMNS``)
``report.json``         summary with ``"schema": 1``
``config.resolved.ini`` the fully resolved configuration; rerunning it reproduces the CSV

A failed run writes ``error.json`` instead and exits with 2 (configuration),
3 (data) or 4 (numerical failure).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import audio, datasets, info, probes, robust, shap
from .bands import Basis, band_stats, default_partition, fit_basis
from .config import COMMANDS, ExperimentConfig
from .core import atomic_write_bytes, condition_number, fit_pca
from .errors import BandInfoError, ConfigError, UnknownCommand

SCHEMA = 1

COLUMNS = {
    "spectrum": ["index", "eigenvalue", "explained_variance"],
    "bands": ["band", "feature_count", "power_fraction"],
    "predictivity": list(probes.SWEEP_COLUMNS),
    "sensitivity": list(probes.SWEEP_COLUMNS),
    "mi": ["band", "estimator", "dims", "mi"],
    "pid": ["band_i", "band_j", "R", "S", "U1", "U2", "I"],
    "shap": ["band", "phi"],
    "sfa": ["start", "n_slow", "mean", "low", "high"],
    "noise": ["image", "variance"],
    "boot-sim": ["band_i", "band_j", "similarity"],
}

# defaults per command when the config names no source
DEFAULT_SOURCES = {
    "spectrum": "synthetic:digits",
    "bands": "synthetic:digits",
    "predictivity": "synthetic:digits",
    "sensitivity": "synthetic:digits",
    "mi": "synthetic:digits",
    "pid": "synthetic:pid2band",
    "shap": "synthetic:digits",
    "sfa": "synthetic:latent-pair",
    "noise": "synthetic:noise",
    "boot-sim": "synthetic:spiked",
}


def _num(v):
    v = float(v)
    return repr(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


# --- band resolution -----------------------------------------------------------------


def resolve_bands(cfg: ExperimentConfig, dataset) -> list:
    """Configured bands, or an even partition of ``params.basis`` into ``params.n_bands``."""
    if cfg.bands:
        return cfg.band_specs()
    kind = cfg.param("basis", "pca")
    n_bands = cfg.param("n_bands", 10, int)
    stub = Basis(kind, dataset.image_shape, levels=cfg.param("levels", 2, int))
    n_bands = min(n_bands, stub.num_indices())
    return default_partition(stub, n_bands)


def _single_basis(specs, dataset, levels: int):
    kinds = {s.basis for s in specs}
    if len(kinds) != 1:
        raise ConfigError(f"this command needs bands from a single basis, got {sorted(kinds)}")
    return fit_basis(kinds.pop(), dataset, levels)


# --- pipelines: each returns (csv rows, json summary) ---------------------------------


def run_spectrum(cfg, ds):
    spec = fit_pca(ds)
    lam = spec.eigenvalues
    total = lam.sum()
    cum = np.cumsum(lam) / total if total > 0 else np.zeros_like(lam)
    rows = [[i + 1, _num(l), _num(min(c, 1.0))] for i, (l, c) in enumerate(zip(lam, cum))]
    try:
        cond = condition_number(lam)
    except BandInfoError:
        cond = float("nan")
    return rows, {"dim": int(spec.dim), "n": len(ds), "total_variance": float(total),
                  "condition_number": cond, "rank_deficient": not math.isfinite(cond)}


def run_bands(cfg, ds):
    specs = resolve_bands(cfg, ds)
    levels = cfg.param("levels", 2, int)
    fits = {}
    rows = []
    for s in specs:
        if s.basis not in fits:
            fits[s.basis] = fit_basis(s.basis, ds, levels)
        st = band_stats(s, fits[s.basis])
        rows.append([str(s), st.feature_count, _num(st.power_fraction)])
    return rows, {"bands": [str(s) for s in specs]}


def run_predictivity(cfg, ds):
    specs = resolve_bands(cfg, ds)
    rep = probes.band_predictivity_sweep(ds, specs, cfg.probe_config(), cfg.seed)
    return _sweep_rows(rep), {"bands": [str(s) for s in specs], **rep.meta}


def run_sensitivity(cfg, ds):
    specs = resolve_bands(cfg, ds)
    rep = probes.band_sensitivity_sweep(ds, specs, cfg.probe_config(), cfg.seed)
    return _sweep_rows(rep), {"bands": [str(s) for s in specs], **rep.meta}


def _sweep_rows(rep):
    return [[r.band, r.metric, _num(r.value), r.feature_count, _num(r.power_fraction), r.seed]
            for r in rep.rows]


def run_mi(cfg, ds):
    if not ds.categorical:
        raise ConfigError("mi needs categorical targets")
    specs = resolve_bands(cfg, ds)
    basis = _single_basis(specs, ds, cfg.param("levels", 2, int))
    estimator = cfg.param("estimator", "gaussian")
    max_dims = cfg.param("max_dims", info.MAX_BAND_DIMS, int)
    y = info.one_hot(ds.targets, ds.num_classes)
    rows = []
    for s in specs:
        z = info.top_variance_columns(info.band_coefficients(ds.images, s, basis), max_dims)
        if z.shape[1] == 0:
            value = 0.0
        elif estimator == "gaussian":
            value = info.gaussian_mi(info.GaussianJoint.from_samples(x=z, y=y), "x", "y")
        elif estimator == "kraskov":
            value = info.kraskov_mi(z, ds.targets, k=cfg.param("k", 3, int),
                                    lnc=cfg.param("lnc", False, bool))
        else:
            raise ConfigError(f"unknown estimator {estimator!r}; choose gaussian or kraskov")
        rows.append([str(s), estimator, z.shape[1], _num(value)])
    return rows, {"bands": [str(s) for s in specs], "estimator": estimator, "units": "nats"}


def run_pid(cfg, ds):
    specs = resolve_bands(cfg, ds)
    basis = _single_basis(specs, ds, cfg.param("levels", 2, int))
    grid = info.pid_matrix(ds, specs, basis, cfg.param("max_dims", info.MAX_BAND_DIMS, int))
    rows = [[r["band_i"], r["band_j"]] + [_num(r[k]) for k in ("R", "S", "U1", "U2", "I")]
            for r in grid.rows()]
    cells = [[c.as_dict() for c in row] for row in grid.cells]
    return rows, {"bands": grid.bands, "grid": cells, "units": "nats"}


def run_shap(cfg, ds):
    specs = resolve_bands(cfg, ds)
    m = cfg.param("m", None, int)
    result, game = shap.band_shap(ds, specs, cfg.probe_config(), m=m, seed=cfg.seed)
    rows = [[str(s), _num(p)] for s, p in zip(specs, result.phi)]
    return rows, {"bands": [str(s) for s in specs], "method": result.method, "samples": result.samples,
                  "v_empty": result.v_empty, "v_full": result.v_full,
                  "efficiency_gap": result.efficiency_gap, "diagnostics": result.diagnostics,
                  "coalitions": game.log()}


def _audio_streams(cfg):
    kind, a, b, rate = datasets.load_audio_pair(cfg.source, cfg.seed, cfg.source_options,
                                                cfg.param("second"))
    if b is None:
        raise ConfigError("sfa needs two signals; set params.second to a second WAV file")
    meta = {"input": kind}
    if kind == "audio":
        step = cfg.param("decimate", 40, int)
        if step < 1:
            raise ConfigError("decimate must be >= 1")
        bank = audio.gammatone_bank(rate, cfg.param("channels", audio.N_CHANNELS, int))
        a = audio.cochleagram(a, rate, bank).data[:, ::step]
        b = audio.cochleagram(b, rate, bank).data[:, ::step]
        meta.update(sample_rate=rate, decimate=step, channels=int(a.shape[0]))
    return a, b, meta


def run_sfa(cfg, _ds):
    a, b, meta = _audio_streams(cfg)
    feats = audio.sfa_fit(np.hstack([a, b]), cfg.param("m", None, int))
    fa, fb = feats.transform(a), feats.transform(b)
    n_slow = cfg.param("n_slow", 5, int)
    stride = cfg.param("stride", n_slow, int)
    runs = cfg.param("runs", 5, int)
    total = fa.shape[0]
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    rows = []
    for start in range(0, total - n_slow + 1, stride):
        r = audio.discriminate_pair(fa, fb, n_slow, cfg.seed, start=start, runs=runs)
        rows.append([start, n_slow, _num(r.mean), _num(r.low), _num(r.high)])
    if not rows:
        raise ConfigError(f"n_slow={n_slow} exceeds the {total} available features")
    return rows, {**meta, "features": int(total), "slowness": feats.eigenvalues, "runs": runs,
                  "frames": [int(a.shape[1]), int(b.shape[1])]}


def run_noise(cfg, ds):
    patch = cfg.param("patch", 8, int)
    quantile = cfg.param("quantile", 0.05, float)
    est = [robust.estimate_noise(img, patch, quantile) for img in ds.images]
    rows = [[i, _num(v)] for i, v in enumerate(est)]
    return rows, {"mean_variance": float(np.mean(est)), "patch": patch, "quantile": quantile,
                  "true_variance": ds.meta.get("true_variance")}


def run_boot_sim(cfg, ds):
    x = ds.flat()
    n = cfg.param("n", min(len(x), 200), int)
    m = robust.bootstrap_stability(x, n, cfg.param("resamples", 20, int), cfg.param("n_bands", 10, int),
                                   cfg.seed, cfg.param("normalization", "sqrt"))
    rows = [line.split(",") for line in m.to_csv().splitlines()[1:]]
    summary = json.loads(m.to_json())
    summary.pop("schema")
    return rows, summary


PIPELINES = {
    "spectrum": run_spectrum,
    "bands": run_bands,
    "predictivity": run_predictivity,
    "sensitivity": run_sensitivity,
    "mi": run_mi,
    "pid": run_pid,
    "shap": run_shap,
    "sfa": run_sfa,
    "noise": run_noise,
    "boot-sim": run_boot_sim,
}


def run(cfg: ExperimentConfig) -> Path:
    """Execute one configured pipeline and write its reports; returns the output directory."""
    if cfg.command not in PIPELINES:
        raise UnknownCommand(f"unknown command {cfg.command!r}")
    if not cfg.source:
        cfg.source = DEFAULT_SOURCES[cfg.command]
    out = Path(cfg.out)
    with threadpool_limits(limits=cfg.threads):
        ds = None if cfg.command == "sfa" else datasets.load_source(cfg.source, cfg.seed, cfg.source_options)
        rows, summary = PIPELINES[cfg.command](cfg, ds)
    report = {"schema": SCHEMA, "command": cfg.command, "source": cfg.source, "seed": cfg.seed,
              "columns": COLUMNS[cfg.command], **summary}
    atomic_write_bytes(out / "config.resolved.ini", cfg.to_ini().encode())
    atomic_write_bytes(out / "report.csv", _csv(COLUMNS[cfg.command], rows).encode())
    text = json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write_bytes(out / "report.json", text.encode())
    return out


# --- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandinfo", description="Band-wise information experiments.")
    p.add_argument("command", help=f"one of {', '.join(COMMANDS)}, or 'run' to take it from --config")
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--source", help="cifar-binary:<path> | tensor:<path> | wav:<path> | synthetic:<name>")
    p.add_argument("--band", action="append", default=[], help="band spec; repeat for several")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config entry, e.g. params.n_bands=5")
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = ExperimentConfig.from_ini(text)
        if args.command not in ("run", cfg.command):
            raise ConfigError(f"command {args.command!r} conflicts with config command {cfg.command!r}")
    else:
        if args.command == "run":
            raise ConfigError("'run' needs --config")
        if args.command not in COMMANDS:
            raise UnknownCommand(f"unknown command {args.command!r}; choose from {', '.join(COMMANDS)}")
        cfg = ExperimentConfig(args.command)
    for item in args.set:
        cfg = cfg.with_override(item)
    flags = [("seed", args.seed), ("out", args.out), ("threads", args.threads), ("source", args.source)]
    for key, value in flags:
        if value is not None:
            cfg = cfg.with_override(f"experiment.{key}={value}")
    if args.band:
        cfg = cfg.with_override("bands.specs=" + " ".join(args.band))
    if not cfg.source:
        cfg = cfg.with_override(f"experiment.source={DEFAULT_SOURCES[cfg.command]}")
    return cfg


def _write_error(out, exc: BaseException, code: int, command) -> None:
    record = {"schema": SCHEMA, "exit_code": code, "error": type(exc).__name__, "message": str(exc),
              "command": command}
    try:
        atomic_write_bytes(Path(out) / "error.json", (json.dumps(record, indent=2, sort_keys=True) + "\n").encode())
    except OSError:
        pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out, command = args.out or "runs", args.command
    try:
        cfg = resolve_config(args)
        out, command = cfg.out, cfg.command
        path = run(cfg)
    except BandInfoError as exc:
        print(f"bandinfo: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        _write_error(out, exc, exc.exit_code, command)
        return exc.exit_code
    except OSError as exc:
        print(f"bandinfo: error: {exc}", file=sys.stderr)
        _write_error(out, exc, 3, command)
        return 3
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"bandinfo: error: {exc}", file=sys.stderr)
        _write_error(out, exc, 4, command)
        return 4
    print(path / "report.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
