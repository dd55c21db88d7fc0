"""Deterministic fluid-flow simulator for multi-stream HTTP transfers.

Streams share one bottleneck link. Each stream is capped by its TCP window
(buffer / RTT), by a fair share of the link, and by a client-side I/O drain
rate that depends on the I/O request size. Every file or chunk request pays
a fixed number of RTTs of setup before data flows. The device draws extra
power while any connection is open, a little more per open connection, and
holds a tail state after the last byte.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .energy import EnergyReport, PowerTrace, TransferWindow, normalize_per_100mb, total_energy
from .plan import KB, TransferPlan, plan_chunks

DEFAULT_RATE_HZ = 10.0

DEFAULT_IO_DRAIN_MBPS: tuple[tuple[int, float], ...] = (
    (1 * KB, 9.0),
    (2 * KB, 10.5),
    (4 * KB, 11.5),
    (8 * KB, 12.5),
    (16 * KB, math.inf),
)

# Time stamps closer than this are treated as simultaneous.
_EPS_T = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    link_capacity_mbps: float
    rtt_s: float
    tcp_buffer_bytes: float
    per_request_setup_rtts: float = 2.0
    io_drain_mbps: tuple[tuple[int, float], ...] = DEFAULT_IO_DRAIN_MBPS

    def __post_init__(self) -> None:
        if not (self.link_capacity_mbps > 0 and self.rtt_s > 0 and self.tcp_buffer_bytes > 0):
            raise ValueError("capacity, rtt and buffer must be positive")
        if self.per_request_setup_rtts < 0:
            raise ValueError("per_request_setup_rtts must be non-negative")
        table = tuple(sorted((int(k), float(v)) for k, v in self.io_drain_mbps))
        if not table or any(v <= 0 for _, v in table):
            raise ValueError("io drain table must be non-empty with positive rates")
        object.__setattr__(self, "io_drain_mbps", table)

    @property
    def bdp_bytes(self) -> float:
        return self.link_capacity_mbps * 1e6 / 8 * self.rtt_s

    @property
    def window_limit_mbps(self) -> float:
        return self.tcp_buffer_bytes * 8 / (self.rtt_s * 1e6)

    def io_drain(self, io_request_bytes: int) -> float:
        """Per-stream client drain rate (Mbps); step lookup, clamped at both ends."""
        keys = [k for k, _ in self.io_drain_mbps]
        i = bisect.bisect_right(keys, io_request_bytes) - 1
        return self.io_drain_mbps[max(i, 0)][1]


class RadioKind(str, Enum):
    WIFI = "wifi"
    LTE = "lte"


@dataclass(frozen=True)
class DevicePowerModel:
    p_base_w: float = 0.9
    p_radio_active_w: float = 0.7
    p_per_connection_w: float = 0.02
    tail_power_w: float = 0.6
    tail_duration_s: float = 0.24
    radio_kind: RadioKind = RadioKind.WIFI

    def __post_init__(self) -> None:
        object.__setattr__(self, "radio_kind", RadioKind(self.radio_kind))
        for name in ("p_base_w", "p_radio_active_w", "p_per_connection_w", "tail_power_w", "tail_duration_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def level(self, n_open: int) -> float:
        """Instantaneous power with ``n_open`` connections open."""
        if n_open <= 0:
            return self.p_base_w
        return self.p_base_w + self.p_radio_active_w + self.p_per_connection_w * n_open


WIFI_POWER = DevicePowerModel(0.9, 0.7, 0.02, 0.6, 0.24, RadioKind.WIFI)
LTE_POWER = DevicePowerModel(0.9, 1.2, 0.03, 1.1, 11.5, RadioKind.LTE)
BUILTIN_POWER = {"wifi": WIFI_POWER, "lte": LTE_POWER}


class SimEvent(NamedTuple):
    t: float
    kind: str  # open | data | close | file_start | file_done | skip
    file: int
    d_open: int = 0


@dataclass(frozen=True)
class FileRecord:
    index: int
    start_s: float
    end_s: float
    bytes: int


@dataclass(eq=False)
class SimResult:
    duration_s: float
    avg_throughput_mbps: float
    trace: PowerTrace
    report: EnergyReport
    events: list[SimEvent]
    total_bytes: int
    files: list[FileRecord] = field(default_factory=list)

    @property
    def window(self) -> TransferWindow:
        return TransferWindow(0.0, self.duration_s)

    @property
    def last_byte_t(self) -> float:
        return self.duration_s

    def same_as(self, other: SimResult) -> bool:
        return (
            self.duration_s == other.duration_s
            and self.avg_throughput_mbps == other.avg_throughput_mbps
            and self.report == other.report
            and self.events == other.events
            and self.files == other.files
            and self.trace == other.trace
        )


def per_stream_throughput(config: NetworkConfig, n_active: int) -> float:
    """Rate of one stream (Mbps) when ``n_active`` streams share the link."""
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    return min(config.window_limit_mbps, config.link_capacity_mbps / n_active)


class _Stream:
    __slots__ = ("file", "size", "remaining", "data_at", "flowing")

    def __init__(self, file: int, size: int, data_at: float) -> None:
        self.file = file
        self.size = size
        self.remaining = float(size)
        self.data_at = data_at
        self.flowing = False


def _run_events(plan: TransferPlan, files: Sequence[int], config: NetworkConfig):
    setup_s = config.per_request_setup_rtts * config.rtt_s
    io_cap = config.io_drain(plan.io_request_bytes)
    events: list[SimEvent] = []
    records: dict[int, list] = {}
    pending = list(range(len(files)))
    pending.reverse()
    streams: list[_Stream] = []
    left: dict[int, int] = {}
    now = 0.0

    def start_next() -> bool:
        while pending:
            idx = pending.pop()
            size = int(files[idx])
            if size == 0:
                events.append(SimEvent(now, "skip", idx))
                records[idx] = [now, now, 0]
                continue
            chunks = plan_chunks(size, plan.parallelism)
            events.append(SimEvent(now, "file_start", idx))
            for a, b in chunks:
                streams.append(_Stream(idx, b - a + 1, now + setup_s))
                events.append(SimEvent(now, "open", idx, +1))
            left[idx] = len(chunks)
            records[idx] = [now, None, 0]
            return True
        return False

    in_flight = 0
    while in_flight < plan.concurrency and start_next():
        in_flight += 1

    while streams:
        for s in streams:
            if not s.flowing and s.data_at <= now + _EPS_T:
                s.flowing = True
                events.append(SimEvent(now, "data", s.file))
        flowing = [s for s in streams if s.flowing]
        waiting = [s.data_at for s in streams if not s.flowing]
        if flowing:
            rate_bps = min(per_stream_throughput(config, len(flowing)), io_cap) * 1e6 / 8
            t_done = now + min(s.remaining for s in flowing) / rate_bps
        else:
            rate_bps = 0.0
            t_done = math.inf
        t_next = min([t_done] + waiting)
        for s in flowing:
            s.remaining -= rate_bps * (t_next - now)
        now = t_next
        for s in [s for s in flowing if s.remaining <= 1e-6 + 1e-12 * s.size]:
            streams.remove(s)
            events.append(SimEvent(now, "close", s.file, -1))
            records[s.file][2] += s.size
            left[s.file] -= 1
            if left[s.file] == 0:
                records[s.file][1] = now
                events.append(SimEvent(now, "file_done", s.file))
                in_flight -= 1
        while in_flight < plan.concurrency and start_next():
            in_flight += 1

    file_records = [FileRecord(i, r[0], r[1], r[2]) for i, r in sorted(records.items())]
    return events, file_records, now


def _levels(events: Sequence[SimEvent], power: DevicePowerModel, last_byte_t: float):
    """Breakpoints ``(times, levels)``: level[k] holds on [times[k], times[k+1])."""
    times: list[float] = []
    levels: list[float] = []
    n_open = 0
    for ev in events:
        n_open += ev.d_open
        level = power.level(n_open)
        if times and ev.t == times[-1]:
            levels[-1] = level
        else:
            times.append(ev.t)
            levels.append(level)
    if not times or times[0] > 0:
        times.insert(0, 0.0)
        levels.insert(0, power.p_base_w)
    if events:
        tail_level = power.p_base_w + power.tail_power_w
        if times[-1] == last_byte_t:
            levels[-1] = tail_level
        else:
            times.append(last_byte_t)
            levels.append(tail_level)
        if power.tail_duration_s > 0:
            times.append(last_byte_t + power.tail_duration_s)
            levels.append(power.p_base_w)
        else:
            levels[-1] = power.p_base_w
    return times, levels


def synthesize_trace(
    events: Sequence[SimEvent],
    power: DevicePowerModel,
    rate_hz: float = DEFAULT_RATE_HZ,
    duration_s: float | None = None,
) -> PowerTrace:
    """Sample the piecewise-constant device power implied by ``events``.

    Samples fall on a regular ``rate_hz`` grid. Each step edge is also
    encoded as a pair of samples a microsecond apart, so trapezoidal
    integration recovers the rectangle areas almost exactly.
    ``duration_s`` sets the trace length when there are no events; otherwise
    the trace ends when the tail does.
    """
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    events = sorted(events, key=lambda e: e.t)
    opens = [e for e in events if e.d_open]
    last_byte_t = max((e.t for e in opens), default=0.0)
    times, levels = _levels(opens, power, last_byte_t)
    if opens:
        end = last_byte_t + power.tail_duration_s
    else:
        if duration_s is None or duration_s <= 0:
            raise ValueError("duration_s is required for an idle trace")
        end = duration_s
    end = max(end, duration_s or 0.0)

    step = 1.0 / rate_hz
    grid = np.arange(int(math.floor(end * rate_hz + 1e-9)) + 1) * step
    grid = grid[grid < end - 1e-9]
    pts_t = list(grid) + [end]
    edge_t = []
    edge_p = []
    bt = np.array(times)
    for k in range(1, len(times)):
        b = times[k]
        if b > end:
            break
        gap = min(b - times[k - 1], (times[k + 1] - b) if k + 1 < len(times) else math.inf)
        delta = min(1e-6, gap / 3)
        edge_t += [b - delta, b]
        edge_p += [levels[k - 1], levels[k]]
    all_t = np.array(pts_t + edge_t)
    idx = np.searchsorted(bt, np.array(pts_t), side="right") - 1
    all_p = np.concatenate((np.asarray(levels)[idx], np.array(edge_p)))
    # edge samples first so they win ties against grid samples
    is_grid = np.concatenate((np.ones(len(pts_t)), np.zeros(len(edge_t))))
    order = np.lexsort((is_grid, all_t))
    all_t, all_p = all_t[order], all_p[order]
    keep = np.concatenate(([True], np.diff(all_t) > 0))
    return PowerTrace(all_t[keep], all_p[keep], rate_hz)


def dynamic_energy_from_events(events: Sequence[SimEvent], power: DevicePowerModel, t_end: float) -> float:
    """Exact integral of (power - base) over [0, t_end] from the event list."""
    opens = sorted((e for e in events if e.d_open), key=lambda e: e.t)
    energy = 0.0
    n_open = 0
    t_prev = 0.0
    for ev in opens:
        if ev.t > t_prev:
            energy += (power.level(n_open) - power.p_base_w) * (min(ev.t, t_end) - t_prev)
            t_prev = ev.t
        n_open += ev.d_open
    return energy


def simulate_transfer(
    plan: TransferPlan,
    files: Sequence[int],
    config: NetworkConfig,
    power: DevicePowerModel,
    rate_hz: float = DEFAULT_RATE_HZ,
) -> SimResult:
    """Run one batch back-to-back under ``plan`` and account its energy."""
    if not files:
        raise ValueError("file list is empty")
    if any(int(s) < 0 for s in files):
        raise ValueError("file sizes must be non-negative")
    events, records, last_byte_t = _run_events(plan, files, config)
    total_bytes = sum(r.bytes for r in records)
    if total_bytes == 0:
        raise ValueError("all files are empty")
    duration = last_byte_t
    trace = synthesize_trace(events, power, rate_hz)
    e_dyn = dynamic_energy_from_events(events, power, duration)
    e_base = power.p_base_w * duration
    report = EnergyReport(
        e_total_j=total_energy(e_base, e_dyn),
        e_base_j=e_base,
        e_dynamic_j=e_dyn,
        e_tail_j=power.tail_power_w * power.tail_duration_s,
        bytes_transferred=total_bytes,
        e_per_100mb_j=normalize_per_100mb(e_dyn, total_bytes),
    )
    return SimResult(
        duration_s=duration,
        avg_throughput_mbps=total_bytes * 8 / duration / 1e6,
        trace=trace,
        report=report,
        events=events,
        total_bytes=total_bytes,
        files=records,
    )
