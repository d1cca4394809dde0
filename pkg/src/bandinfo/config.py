"""Experiment configuration files.

Grammar: INI-style sections of ``key = value`` lines, ``#`` comments.

    [experiment]
    command = pid
    source = synthetic:pid2band
    seed = 0
    out = runs/pid
    threads = 1

    [bands]
    specs = pca:band:0:2 pca:band:2:4      # whitespace separated canonical specs

    [probe]        # ProbeConfig fields
    kind = logistic

    [params]       # command-specific settings (basis, n_bands, m, k, ...)

    [source]       # options passed to synthetic generators (n, size, ...)

Values are kept as strings so a file survives parse -> print -> parse
unchanged; typed access goes through the helper methods.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .bands import parse_band
from .errors import ConfigError
from .probes import ProbeConfig

COMMANDS = ("spectrum", "bands", "predictivity", "sensitivity", "mi", "pid", "shap", "sfa",
            "noise", "boot-sim")


@dataclass
class ExperimentConfig:
    command: str
    source: str = ""
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    bands: list[str] = field(default_factory=list)
    probe: dict[str, str] = field(default_factory=dict)
    params: dict[str, str] = field(default_factory=dict)
    source_options: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            from .errors import UnknownCommand
            raise UnknownCommand(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        self.seed = int(self.seed)
        self.threads = int(self.threads)
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.bands = [str(parse_band(b)) for b in self.bands]
        self.probe = {k: str(v) for k, v in self.probe.items()}
        self.params = {k: str(v) for k, v in self.params.items()}
        self.source_options = {k: str(v) for k, v in self.source_options.items()}
        self.probe_config()

    # --- typed access -------------------------------------------------------------

    def band_specs(self):
        return [parse_band(b) for b in self.bands]

    def probe_config(self) -> ProbeConfig:
        kinds = {f.name: f.type for f in fields(ProbeConfig)}
        kw = {}
        for key, raw in self.probe.items():
            if key not in kinds:
                raise ConfigError(f"unknown probe setting {key!r}")
            kw[key] = _coerce(raw, kinds[key], key)
        return ProbeConfig(**kw)

    def param(self, key: str, default=None, kind=str):
        if key not in self.params:
            return default
        return _coerce(self.params[key], kind, key)

    # --- text form -------------------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"command": self.command, "source": self.source, "seed": str(self.seed),
                            "out": self.out, "threads": str(self.threads)}
        cp["bands"] = {"specs": " ".join(self.bands)}
        for name, section in (("probe", self.probe), ("params", self.params),
                              ("source", self.source_options)):
            cp[name] = dict(sorted(section.items()))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        known = {"experiment", "bands", "probe", "params", "source"}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
        exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
        if "command" not in exp:
            raise ConfigError("config lacks [experiment] command")
        unknown = set(exp) - {"command", "source", "seed", "out", "threads"}
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        specs = cp.get("bands", "specs", fallback="").split()
        return cls(
            command=exp["command"],
            source=exp.get("source", ""),
            seed=_coerce(exp.get("seed", "0"), int, "seed"),
            out=exp.get("out", "runs"),
            threads=_coerce(exp.get("threads", "1"), int, "threads"),
            bands=specs,
            probe=dict(cp["probe"]) if cp.has_section("probe") else {},
            params=dict(cp["params"]) if cp.has_section("params") else {},
            source_options=dict(cp["source"]) if cp.has_section("source") else {},
        )

    def with_override(self, assignment: str) -> "ExperimentConfig":
        """Apply ``section.key=value`` (e.g. ``probe.kind=mlp``)."""
        key, sep, value = assignment.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(self.to_ini())
        if section == "bands" and name == "specs":
            value = " ".join(value.replace(";", " ").split())
        if not cp.has_section(section):
            raise ConfigError(f"unknown config section {section!r}")
        cp[section][name] = value.strip()
        buf = io.StringIO()
        cp.write(buf)
        return ExperimentConfig.from_ini(buf.getvalue())


def _coerce(raw: str, kind, key: str):
    kind_name = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    text = str(raw).strip()
    try:
        if "bool" in kind_name:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "None" in kind_name and text.lower() in ("", "none"):
            return None
        if kind_name.startswith("int"):
            return int(text)
        if kind_name.startswith("float"):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key}") from exc
