"""Energy accounting over instantaneous power traces.

Total energy of a transfer is split into a base part (steady "on" draw times
window length) and a dynamic part (the integral of power above base over the
transfer window). Tail energy is the dynamic energy spent after the last
byte while the radio lingers in a high-power state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_HEADER = ("t_seconds", "watts")
BYTES_PER_100MB = 100 * 10**6

DEFAULT_TAIL_THRESHOLD_W = 0.1
DEFAULT_TAIL_HOLD_S = 2.0


class TraceError(ValueError):
    """Raised for malformed traces or windows that do not fit a trace."""


class NoActivityError(TraceError):
    pass


@dataclass(frozen=True)
class PowerSample:
    t: float
    p: float

    def __post_init__(self) -> None:
        if self.t < 0:
            raise TraceError(f"negative timestamp {self.t}")
        if not self.p >= 0:
            raise TraceError(f"negative or NaN power {self.p}")


@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Timestamped power samples. Stored as two float arrays."""

    t: np.ndarray
    p: np.ndarray
    nominal_rate_hz: float

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if t.ndim != 1 or t.shape != p.shape:
            raise TraceError("time and power arrays must be 1-D and equal length")
        if t.size and t[0] < 0:
            raise TraceError("timestamps must be non-negative")
        if np.any(np.diff(t) <= 0):
            raise TraceError("timestamps must be strictly increasing")
        if np.any(~(p >= 0)):
            raise TraceError("power samples must be non-negative")
        if not self.nominal_rate_hz > 0:
            raise TraceError("nominal_rate_hz must be positive")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_samples(
        cls, samples: Iterable[PowerSample | tuple[float, float]], nominal_rate_hz: float | None = None
    ) -> PowerTrace:
        pairs = [(s.t, s.p) if isinstance(s, PowerSample) else (float(s[0]), float(s[1])) for s in samples]
        for t, p in pairs:
            PowerSample(t, p)
        t = np.array([a for a, _ in pairs], dtype=float)
        p = np.array([b for _, b in pairs], dtype=float)
        if nominal_rate_hz is None:
            nominal_rate_hz = infer_rate_hz(t)
        return cls(t, p, nominal_rate_hz)

    @property
    def samples(self) -> list[PowerSample]:
        return [PowerSample(float(a), float(b)) for a, b in zip(self.t, self.p)]

    @property
    def t_first(self) -> float:
        return float(self.t[0])

    @property
    def t_last(self) -> float:
        return float(self.t[-1])

    def __len__(self) -> int:
        return int(self.t.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
            and self.nominal_rate_hz == other.nominal_rate_hz
        )


@dataclass(frozen=True)
class TransferWindow:
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise TraceError(f"window start {self.t_start} must precede end {self.t_end}")

    @property
    def length_s(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class EnergyReport:
    e_total_j: float
    e_base_j: float
    e_dynamic_j: float
    e_tail_j: float
    bytes_transferred: int
    e_per_100mb_j: float


def infer_rate_hz(t: Sequence[float] | np.ndarray) -> float:
    """Sampling rate as the reciprocal of the median inter-sample gap."""
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise TraceError("at least 2 samples are needed to infer a rate")
    return float(1.0 / np.median(np.diff(t)))


def _check_window(trace: PowerTrace, window: TransferWindow) -> None:
    if len(trace) < 2:
        raise TraceError("at least 2 samples are required for integration")
    if window.t_start < trace.t_first or window.t_end > trace.t_last:
        raise TraceError(
            f"window [{window.t_start}, {window.t_end}] outside trace range "
            f"[{trace.t_first}, {trace.t_last}]"
        )


def _window_points(trace: PowerTrace, window: TransferWindow) -> tuple[np.ndarray, np.ndarray]:
    """Samples strictly inside the window plus linearly interpolated edges."""
    lo = np.searchsorted(trace.t, window.t_start, side="right")
    hi = np.searchsorted(trace.t, window.t_end, side="left")
    edges_p = np.interp([window.t_start, window.t_end], trace.t, trace.p)
    t = np.concatenate(([window.t_start], trace.t[lo:hi], [window.t_end]))
    p = np.concatenate(([edges_p[0]], trace.p[lo:hi], [edges_p[1]]))
    return t, p


def estimate_base_power(trace: PowerTrace, window: TransferWindow) -> float:
    """Median power over the samples lying inside ``window`` (inclusive)."""
    _check_window(trace, window)
    mask = (trace.t >= window.t_start) & (trace.t <= window.t_end)
    if np.count_nonzero(mask) < 3:
        raise TraceError("base-power window must contain at least 3 samples")
    return float(np.median(trace.p[mask]))


def integrate_dynamic_energy(trace: PowerTrace, base_power: float, window: TransferWindow) -> float:
    """Trapezoidal integral of ``P(t) - base_power`` over the window.

    The integrand is signed: samples dipping below base power reduce the
    result instead of being clamped to zero.
    """
    if base_power < 0:
        raise TraceError("base_power must be non-negative")
    _check_window(trace, window)
    t, p = _window_points(trace, window)
    return float(np.trapezoid(p - base_power, t))


def total_energy(e_base_j: float, e_dynamic_j: float) -> float:
    if e_base_j < 0:
        raise ValueError("base energy must be non-negative")
    return e_base_j + e_dynamic_j


def normalize_per_100mb(e_j: float, n_bytes: int) -> float:
    """Scale energy to joules per 100 MB, with MB = 10**6 bytes."""
    if n_bytes <= 0:
        raise ValueError("cannot normalize energy over zero bytes")
    return e_j * (BYTES_PER_100MB / n_bytes)


def segment_tail(
    trace: PowerTrace,
    last_byte_t: float,
    base_power: float,
    threshold_w: float = DEFAULT_TAIL_THRESHOLD_W,
    max_hold_s: float = DEFAULT_TAIL_HOLD_S,
) -> tuple[float, float]:
    """Locate the high-power residue after the last byte.

    The tail runs from ``last_byte_t`` to the last sample at or above
    ``base_power + threshold_w`` that precedes the first run of samples
    staying below that level for ``max_hold_s`` (a run cut short by the
    end of the trace also qualifies). Returns ``(duration_s, energy_j)``.
    """
    if threshold_w <= 0:
        raise ValueError("threshold_w must be positive")
    if len(trace) < 2:
        raise TraceError("at least 2 samples are required")
    if last_byte_t > trace.t_last or last_byte_t < trace.t_first:
        raise TraceError(f"last byte time {last_byte_t} outside trace range")

    level = base_power + threshold_w
    t, p = trace.t, trace.p
    start = int(np.searchsorted(t, last_byte_t, side="left"))
    tail_end = last_byte_t
    i = start
    n = len(t)
    while i < n:
        if p[i] >= level:
            tail_end = float(t[i])
            i += 1
            continue
        j = i
        while j + 1 < n and p[j + 1] < level and t[j + 1] - t[i] < max_hold_s:
            j += 1
        if j + 1 >= n or p[j + 1] < level:
            break
        i = j + 1
    duration = tail_end - last_byte_t
    if duration <= 0:
        return 0.0, 0.0
    energy = integrate_dynamic_energy(trace, base_power, TransferWindow(last_byte_t, tail_end))
    return duration, energy


def _qualifying_runs(active: np.ndarray, t: np.ndarray, hold_s: float) -> list[tuple[int, int]]:
    runs = []
    i = 0
    n = len(active)
    while i < n:
        if not active[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and active[j + 1]:
            j += 1
        if t[j] - t[i] >= hold_s:
            runs.append((i, j))
        i = j + 1
    return runs


def detect_transfer_window(
    trace: PowerTrace, base_power: float, threshold_w: float, hold_s: float
) -> TransferWindow:
    """Window spanning the first to the last run above ``base + threshold`` lasting ``hold_s``."""
    if len(trace) < 2 or trace.t_last - trace.t_first < hold_s:
        raise TraceError("trace is shorter than the hold time")
    runs = _qualifying_runs(trace.p > base_power + threshold_w, trace.t, hold_s)
    if not runs:
        raise NoActivityError("no activity above base power found in trace")
    t_start = float(trace.t[runs[0][0]])
    t_end = float(trace.t[runs[-1][1]])
    if t_end <= t_start:
        # a zero-hold single-sample run; widen to the next sample
        t_end = float(trace.t[min(runs[-1][1] + 1, len(trace) - 1)])
    return TransferWindow(t_start, t_end)


def analyze(
    trace: PowerTrace,
    window: TransferWindow,
    base_power: float,
    bytes_transferred: int,
    *,
    last_byte_t: float | None = None,
    tail_threshold_w: float = DEFAULT_TAIL_THRESHOLD_W,
    tail_hold_s: float = DEFAULT_TAIL_HOLD_S,
) -> EnergyReport:
    """Build an :class:`EnergyReport` for one transfer.

    ``last_byte_t`` defaults to the window end. The per-100 MB figure
    normalizes the dynamic energy, which is the quantity compared across
    parameter settings.
    """
    e_dyn = integrate_dynamic_energy(trace, base_power, window)
    e_base = base_power * window.length_s
    lb = window.t_end if last_byte_t is None else last_byte_t
    _, e_tail = segment_tail(trace, lb, base_power, tail_threshold_w, tail_hold_s)
    per_100mb = normalize_per_100mb(e_dyn, bytes_transferred) if bytes_transferred > 0 else math.nan
    return EnergyReport(
        e_total_j=total_energy(e_base, e_dyn),
        e_base_j=e_base,
        e_dynamic_j=e_dyn,
        e_tail_j=max(e_tail, 0.0),
        bytes_transferred=bytes_transferred,
        e_per_100mb_j=per_100mb,
    )


def read_trace(path: str | Path) -> PowerTrace:
    """Load a ``t_seconds,watts`` CSV trace."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceError(f"{path}: expected header 't_seconds,watts', got {header!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise TraceError(f"{path}: need at least 2 samples")
    return PowerTrace.from_samples(rows)


def write_trace(trace: PowerTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for t, p in zip(trace.t, trace.p):
            fh.write(f"{float(t)!r},{float(p)!r}\n")
