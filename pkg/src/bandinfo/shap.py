"""Shapley attribution over bands.

Two solvers share the :class:`CoalitionGame` interface. ``shapley_exact``
enumerates every coalition. ``kernel_shap`` solves the Shapley-kernel
weighted least squares with the efficiency constraint imposed through a
KKT system; when the budget covers every coalition it enumerates them with
exact kernel weights, otherwise it samples coalition pairs (S and its
complement) with sizes drawn from the kernel's size distribution.

Coalitions are bitmasks internally: player ``i`` is bit ``1 << i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bands import Basis, fit_basis, project_union
from .core import LabeledDataset
from .errors import ConfigError, DegenerateDesign, TooManyPlayers
from .probes import ProbeConfig, default_metric, evaluate, split_dataset, train_probe

MAX_EXACT_PLAYERS = 12
MAX_RESAMPLES = 20


class CoalitionGame:
    """A cooperative game on ``players`` players with a cached value function.

    ``value`` receives a frozenset of player indices.
    """

    def __init__(self, players: int, value: Callable[[frozenset], float]):
        if players < 1:
            raise ConfigError("a game needs at least one player")
        self.players = players
        self._value = value
        self.cache: dict[int, float] = {}

    @classmethod
    def from_table(cls, table) -> "CoalitionGame":
        """Game whose value for bitmask ``s`` is ``table[s]``."""
        table = np.asarray(table, dtype=float)
        b = int(round(math.log2(len(table))))
        if 1 << b != len(table):
            raise ConfigError("table length must be a power of two")
        return cls(b, lambda s: float(table[sum(1 << i for i in s)]))

    def members(self, mask: int) -> frozenset:
        return frozenset(i for i in range(self.players) if mask >> i & 1)

    def __call__(self, mask: int) -> float:
        if mask not in self.cache:
            self.cache[mask] = float(self._value(self.members(mask)))
        return self.cache[mask]

    @property
    def full(self) -> int:
        return (1 << self.players) - 1

    def log(self) -> list[dict]:
        return [{"coalition": sorted(self.members(k)), "value": v} for k, v in sorted(self.cache.items())]


@dataclass
class ShapResult:
    phi: np.ndarray
    v_empty: float
    v_full: float
    method: str
    samples: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def efficiency_gap(self) -> float:
        return float(self.phi.sum() - (self.v_full - self.v_empty))


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.array([bin(int(m)).count("1") for m in masks])


def shapley_exact(game: CoalitionGame) -> ShapResult:
    b = game.players
    if b > MAX_EXACT_PLAYERS:
        raise TooManyPlayers(f"exact enumeration supports at most {MAX_EXACT_PLAYERS} players")
    masks = np.arange(1 << b)
    values = np.array([game(int(m)) for m in masks])
    sizes = _popcount(masks)
    weight = np.array([math.factorial(s) * math.factorial(b - s - 1) / math.factorial(b)
                       for s in range(b)])
    phi = np.zeros(b)
    for i in range(b):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (values[without | bit] - values[without]))
    return ShapResult(phi, values[0], values[-1], "exact", 1 << b)


def kernel_weight(b: int, s: int) -> float:
    return (b - 1) / (math.comb(b, s) * s * (b - s))


def _size_distribution(b: int) -> np.ndarray:
    s = np.arange(1, b)
    p = (b - 1) / (s * (b - s))
    return p / p.sum()


def _sample_design(b: int, m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    probs = _size_distribution(b)
    masks = []
    while len(masks) < m:
        s = rng.choice(np.arange(1, b), p=probs)
        members = rng.choice(b, size=s, replace=False)
        mask = int(sum(1 << int(i) for i in members))
        masks.append(mask)
        if len(masks) < m:
            masks.append(((1 << b) - 1) ^ mask)
    masks = np.array(masks)
    return masks, np.ones(len(masks))


def _solve_kkt(z: np.ndarray, w: np.ndarray, y: np.ndarray, total: float):
    b = z.shape[1]
    a = z.T @ (w[:, None] * z)
    kkt = np.zeros((b + 1, b + 1))
    kkt[:b, :b] = a
    kkt[:b, b] = kkt[b, :b] = 1.0
    rhs = np.concatenate([z.T @ (w * y), [total]])
    if np.linalg.matrix_rank(kkt) < b + 1:
        return None
    sol = np.linalg.solve(kkt, rhs)
    return sol[:b]


def kernel_shap(game: CoalitionGame, m: int, seed: int = 0) -> ShapResult:
    """Constrained weighted least-squares Shapley estimate from ``m`` coalition evaluations.

    ``m`` counts the empty and full coalitions, which are always evaluated.
    """
    b = game.players
    if m < 2 * b + 2:
        raise ConfigError(f"kernel_shap needs m >= 2b + 2 = {2 * b + 2}")
    v0, v1 = game(0), game(game.full)
    total = v1 - v0
    if b == 1:
        return ShapResult(np.array([total]), v0, v1, "kernel", 2)
    rng = np.random.default_rng(seed)
    exhaustive = m >= (1 << b)
    phi = None
    for attempt in range(MAX_RESAMPLES):
        if exhaustive:
            masks = np.arange(1, (1 << b) - 1)
            w = np.array([kernel_weight(b, s) for s in _popcount(masks)])
        else:
            masks, w = _sample_design(b, m - 2, rng)
        z = ((masks[:, None] >> np.arange(b)) & 1).astype(float)
        y = np.array([game(int(k)) for k in masks]) - v0
        phi = _solve_kkt(z, w, y, total)
        if phi is not None or exhaustive:
            break
    if phi is None:
        raise DegenerateDesign("sampled coalitions do not identify the Shapley values")
    phi = phi + (total - phi.sum()) / b
    fitted = z @ phi
    diag = {"weighted_residual": float(np.sum(w * (fitted - y) ** 2) / np.sum(w)),
            "resamples": attempt, "exhaustive": exhaustive}
    return ShapResult(phi, v0, v1, "kernel", int(len(masks) + 2), diag)


def band_game(dataset: LabeledDataset, bands, config: ProbeConfig | None = None, seed: int = 0,
              basis: Basis | None = None) -> CoalitionGame:
    """Game whose value is the test metric of a probe retrained on the union of the chosen bands.

    The empty coalition scores the majority-class rate of the training split
    for class labels, and the metric of a probe on constant input otherwise.
    """
    cfg = config or ProbeConfig()
    train, test = split_dataset(dataset, cfg.test_fraction, seed)
    if basis is None:
        kinds = {s.basis for s in bands}
        if len(kinds) != 1:
            raise ConfigError("bands of a game must share one basis")
        basis = fit_basis(kinds.pop(), train)
    metric = cfg.metric or default_metric(dataset)

    def value(members: frozenset) -> float:
        if not members:
            if dataset.categorical:
                return float(np.bincount(train.targets).max() / len(train))
            chosen = []
        else:
            chosen = [bands[i] for i in sorted(members)]
        if not chosen:
            tr, te = train.with_images(np.zeros_like(train.images)), test.with_images(np.zeros_like(test.images))
        else:
            tr, te = project_union(train, chosen, basis), project_union(test, chosen, basis)
        return evaluate(train_probe(tr, cfg, seed), te, metric)

    return CoalitionGame(len(bands), value)


def band_shap(dataset: LabeledDataset, bands, config: ProbeConfig | None = None, m: int | None = None,
              seed: int = 0, basis: Basis | None = None) -> tuple[ShapResult, CoalitionGame]:
    """Shapley values of bands; exact when ``m`` is None, kernel estimate otherwise."""
    game = band_game(dataset, bands, config, seed, basis)
    result = shapley_exact(game) if m is None else kernel_shap(game, m, seed)
    return result, game
