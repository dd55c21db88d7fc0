"""Few-sample throughput model, knee selection, and energy break points.

Aggregate throughput of ``n`` streams is modelled as
``Th(n) = n / sqrt(a*n**2 + b*n + c)``. Squaring ``n / Th`` turns this
into a quadratic in ``n``, so three samples pin the coefficients exactly
and more samples are fitted by least squares on the same linearization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .plan import KB, TransferPlan

DEFAULT_TAU = 0.05
DEFAULT_IO = 16 * KB


class FitError(ValueError):
    pass


class InfeasibleError(ValueError):
    """No grid cell satisfies the requested objective."""


@dataclass(frozen=True)
class ThroughputSample:
    n: int
    throughput_mbps: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("stream count must be >= 1")
        if not self.throughput_mbps > 0:
            raise ValueError("throughput must be positive")


@dataclass(frozen=True)
class ModelCoeffs:
    a: float
    b: float
    c: float

    def quadratic(self, n: float) -> float:
        return self.a * n * n + self.b * n + self.c

    def predict(self, n: float) -> float:
        q = self.quadratic(n)
        if q <= 0:
            raise FitError(f"model undefined at n={n}")
        return n / math.sqrt(q)


def fit_throughput_model(samples: Sequence[ThroughputSample | tuple[int, float]]) -> ModelCoeffs:
    """Fit ``(a, b, c)`` from three or more samples at distinct stream counts.

    Three samples are solved exactly. With more, residuals are weighted by
    the inverse of the transformed target so that every sample counts in
    relative terms rather than letting the largest ``n`` dominate.
    """
    pts = [s if isinstance(s, ThroughputSample) else ThroughputSample(int(s[0]), float(s[1])) for s in samples]
    ns = np.array([s.n for s in pts], dtype=float)
    if len(set(ns.tolist())) < 3:
        raise FitError("need at least three distinct stream counts")
    y = (ns / np.array([s.throughput_mbps for s in pts])) ** 2
    X = np.column_stack((ns**2, ns, np.ones_like(ns)))
    if len(pts) == 3:
        try:
            coef = np.linalg.solve(X, y)
        except np.linalg.LinAlgError as exc:
            raise FitError("singular system") from exc
    else:
        w = 1.0 / y
        coef, _, rank, _ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
        if rank < 3:
            raise FitError("singular system")
    coeffs = ModelCoeffs(*(float(v) for v in coef))
    if any(coeffs.quadratic(n) <= 0 for n in ns):
        raise FitError("fitted quadratic is non-positive over the sampled domain")
    return coeffs


def predict_optimal_n(coeffs: ModelCoeffs, n_max: int, marginal_gain_tau: float = DEFAULT_TAU) -> int:
    """Smallest ``n`` whose next step gains less than ``tau`` relative throughput."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    th = [coeffs.predict(n) for n in range(1, n_max + 1)]
    for n in range(1, n_max):
        if th[n] / th[n - 1] - 1 < marginal_gain_tau:
            return n
    return n_max


def find_energy_break_point(points: Mapping[float, float] | Iterable[tuple[float, float]]) -> float:
    """Level with the lowest energy; ties go to the lowest level."""
    items = sorted(points.items() if isinstance(points, Mapping) else points)
    if not items:
        raise ValueError("no points given")
    levels = [lv for lv, _ in items]
    if len(set(levels)) != len(levels):
        raise ValueError("levels must be distinct")
    best = items[0]
    for level, energy in items[1:]:
        if energy < best[1]:
            best = (level, energy)
    return best[0]


class Objective(str, Enum):
    MAX_THROUGHPUT = "max_throughput"
    MIN_ENERGY = "min_energy"
    ENERGY_UNDER_THROUGHPUT_FLOOR = "energy_under_throughput_floor"


def _as_plan(key: tuple[int, ...], default_io: int) -> TransferPlan:
    if len(key) == 2:
        return TransferPlan(key[0], key[1], default_io)
    return TransferPlan(*key)


def recommend_plan(
    grid: Mapping[tuple[int, ...], tuple[float, float]],
    objective: Objective | str = Objective.MIN_ENERGY,
    floor_mbps: float | None = None,
    default_io: int = DEFAULT_IO,
) -> TransferPlan:
    """Pick the grid cell best meeting ``objective``.

    Keys are ``(cc, p)`` or ``(cc, p, io_bytes)``; values are
    ``(throughput_mbps, energy)``. Ties resolve to the smallest key.
    """
    objective = Objective(objective)
    cells = sorted((k, v) for k, v in grid.items() if not (math.isnan(v[0]) or math.isnan(v[1])))
    if not cells:
        raise ValueError("grid is empty")
    if objective is Objective.MAX_THROUGHPUT:
        key = min(cells, key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))[0]
    elif objective is Objective.MIN_ENERGY:
        key = min(cells, key=lambda kv: (kv[1][1], kv[0]))[0]
    else:
        if floor_mbps is None:
            raise ValueError("a throughput floor is required for this objective")
        ok = [kv for kv in cells if kv[1][0] >= floor_mbps]
        if not ok:
            raise InfeasibleError(f"no cell reaches {floor_mbps} Mbps")
        key = min(ok, key=lambda kv: (kv[1][1], kv[0]))[0]
    return _as_plan(key, default_io)
