"""Parameter sweeps over (cc, p, io) with repeated runs, plus report and plot output."""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import shutil
import statistics
import tempfile
import time
import urllib.request
from contextlib import ExitStack
from dataclasses import dataclass, field, fields
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Iterable

from . import energy
from .datasets import MANIFEST_NAME, generate_dataset, get_spec, parse_manifest, sample_sizes
from .engine import FileJob, TransferEngine, TransferError
from .fixture import FixtureServer
from .netsim import simulate_transfer
from .plan import KB, TransferPlan
from .scenario import load_scenario
from .tuner import recommend_plan

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (1, 2, 4, 8, 16, 32)
DEFAULT_IO = tuple(k * KB for k in (1, 2, 4, 8, 16, 32, 64))
REPORT_COLUMNS = ("cc", "p", "io_bytes", "mean_mbps", "sd_mbps", "mean_j_per_100mb", "sd_j", "runs")


class Mode(str, Enum):
    LIVE = "live"
    SIM = "sim"


class FigureKind(str, Enum):
    THROUGHPUT_VS_CC = "throughput_vs_cc"
    ENERGY_VS_CC = "energy_vs_cc"
    THROUGHPUT_VS_P = "throughput_vs_p"
    ENERGY_VS_P = "energy_vs_p"
    SURFACE_CC_P = "surface_cc_p"


@dataclass
class ExperimentConfig:
    mode: Mode = Mode.SIM
    dataset: str = "HTML"
    scale: float = 1.0
    seed: int = 7
    cc: tuple[int, ...] = DEFAULT_LEVELS
    p: tuple[int, ...] = DEFAULT_LEVELS
    io: tuple[int, ...] = DEFAULT_IO
    repetitions: int = 5
    server: str | None = None
    scenario: str | None = "sydney"
    trace_dir: Path | None = None
    out: Path | None = None
    cooldown_s: float | None = None
    base_window_s: float = 5.0
    detect_threshold_w: float = 0.1
    detect_hold_s: float = 1.0
    files_limit: int | None = None

    def __post_init__(self) -> None:
        self.mode = Mode(self.mode)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for name in ("cc", "p", "io"):
            values = tuple(sorted(set(int(v) for v in getattr(self, name))))
            if not values or values[0] < 1:
                raise ValueError(f"{name} grid must be non-empty and positive")
            setattr(self, name, values)
        if self.mode is Mode.LIVE and not self.server:
            raise ValueError("live mode needs a server URL")
        if self.mode is Mode.SIM and not self.scenario:
            raise ValueError("sim mode needs a scenario")

    @property
    def cooldown(self) -> float:
        if self.cooldown_s is not None:
            return self.cooldown_s
        return 5.0 if self.mode is Mode.LIVE else 0.0

    def cells(self) -> list[TransferPlan]:
        return [TransferPlan(c, p, i) for c, p, i in product(self.cc, self.p, self.io)]


@dataclass(frozen=True)
class CellStats:
    cc: int
    p: int
    io_bytes: int
    mean_mbps: float
    sd_mbps: float
    mean_j_per_100mb: float
    sd_j: float
    runs: int
    error: str | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.cc, self.p, self.io_bytes)


@dataclass
class SweepResult:
    cells: list[CellStats]
    repetitions: int | None = None

    def __post_init__(self) -> None:
        self.cells = sorted(self.cells, key=lambda c: c.key)
        keys = [c.key for c in self.cells]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate grid cell in sweep result")

    @property
    def failed(self) -> list[CellStats]:
        return [c for c in self.cells if c.error is not None]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SweepResult):
            return NotImplemented
        return len(self.cells) == len(other.cells) and all(
            _cell_equal(a, b) for a, b in zip(self.cells, other.cells)
        )

    def grid(self) -> dict[tuple[int, int, int], tuple[float, float]]:
        return {c.key: (c.mean_mbps, c.mean_j_per_100mb) for c in self.cells}


def _cell_equal(a: CellStats, b: CellStats) -> bool:
    for f in fields(CellStats):
        if f.name == "error":
            continue
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if x != y:
            return False
    return True


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    if any(math.isnan(v) for v in values):
        return math.nan, math.nan
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return statistics.fmean(values), sd


def _summarize(plan: TransferPlan, runs: list[tuple[float, float]], error: str | None) -> CellStats:
    m_th, sd_th = _mean_sd([r[0] for r in runs])
    m_e, sd_e = _mean_sd([r[1] for r in runs])
    return CellStats(plan.concurrency, plan.parallelism, plan.io_request_bytes, m_th, sd_th, m_e, sd_e, len(runs), error)


# -- sim mode -------------------------------------------------------------------


def _sim_sweep(config: ExperimentConfig) -> SweepResult:
    scenario = load_scenario(config.scenario)
    spec = get_spec(config.dataset)
    if config.files_limit:
        spec = spec.subset(min(config.files_limit, spec.file_count))
    sizes = sample_sizes(spec, config.seed, config.scale)
    cells = []
    for plan in config.cells():
        runs = []
        for _ in range(config.repetitions):
            res = simulate_transfer(plan, sizes, scenario.network, scenario.power, scenario.rate_hz)
            runs.append((res.avg_throughput_mbps, res.report.e_per_100mb_j))
            if config.cooldown:
                time.sleep(config.cooldown)
        cells.append(_summarize(plan, runs, None))
    return SweepResult(cells, config.repetitions)


# -- live mode -------------------------------------------------------------------


def trace_file_name(plan: TransferPlan, rep: int) -> str:
    return f"cc{plan.concurrency}_p{plan.parallelism}_io{plan.io_request_bytes}_r{rep}.csv"


def _fetch_manifest(server: str):
    with urllib.request.urlopen(f"{server.rstrip('/')}/{MANIFEST_NAME}", timeout=30) as resp:
        return parse_manifest(resp.read().decode("utf-8"))


def live_energy(trace_path: Path, n_bytes: int, config: ExperimentConfig) -> float:
    """Energy per 100 MB from an externally captured trace of one run."""
    trace = energy.read_trace(trace_path)
    t0 = trace.t_first
    base = energy.estimate_base_power(
        trace, energy.TransferWindow(t0, min(t0 + config.base_window_s, trace.t_last))
    )
    window = energy.detect_transfer_window(trace, base, config.detect_threshold_w, config.detect_hold_s)
    return energy.analyze(trace, window, base, n_bytes).e_per_100mb_j


def _live_sweep(config: ExperimentConfig) -> SweepResult:
    entries = _fetch_manifest(config.server)
    if config.files_limit:
        entries = entries[: config.files_limit]
    base_url = config.server.rstrip("/")
    cells = []
    for plan in config.cells():
        runs: list[tuple[float, float]] = []
        error = None
        for rep in range(config.repetitions):
            if rep or cells:
                time.sleep(config.cooldown)
            scratch = Path(tempfile.mkdtemp(prefix="xfer-"))
            try:
                jobs = [FileJob(f"{base_url}/{e.name}", scratch / e.name, e.bytes, e.digest) for e in entries]
                result = TransferEngine(plan).execute(jobs)
                if result.failures:
                    raise TransferError(f"{len(result.failures)} file(s) failed", result)
                e100 = math.nan
                if config.trace_dir is not None:
                    path = Path(config.trace_dir) / trace_file_name(plan, rep)
                    if not path.exists():
                        raise FileNotFoundError(f"missing trace {path}")
                    e100 = live_energy(path, result.total_bytes, config)
                runs.append((result.avg_throughput_mbps, e100))
            except (TransferError, OSError, energy.TraceError) as exc:
                error = str(exc)
                log.warning("cell %s rep %d failed: %s", plan, rep, exc)
                break
            finally:
                shutil.rmtree(scratch, ignore_errors=True)
        cells.append(_summarize(plan, runs, error))
    return SweepResult(cells, config.repetitions)


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Run every grid cell ``config.repetitions`` times and aggregate."""
    if config.mode is Mode.SIM:
        return _sim_sweep(config)
    return _live_sweep(config)


# -- reports ---------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def report_text(result: SweepResult, fmt: str = "csv") -> str:
    if not result.cells:
        raise ValueError("empty sweep result")
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for c in result.cells:
            w.writerow([_fmt(getattr(c, col)) for col in REPORT_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        rows = []
        for c in result.cells:
            row = {k: getattr(c, k) for k in REPORT_COLUMNS}
            rows.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()})
        return json.dumps(rows, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(result: SweepResult, path: str | Path, fmt: str = "csv") -> Path:
    path = Path(path)
    path.write_text(report_text(result, fmt), encoding="utf-8")
    return path


def parse_report(text: str, fmt: str = "csv") -> SweepResult:
    if fmt == "csv":
        rows = list(csv.DictReader(_io.StringIO(text)))
        if rows and tuple(rows[0].keys()) != REPORT_COLUMNS:
            raise ValueError("unexpected report columns")
    else:
        rows = json.loads(text)
    cells = []
    for r in rows:
        def num(k):
            v = r[k]
            return math.nan if v is None else float(v)

        cells.append(
            CellStats(
                int(r["cc"]), int(r["p"]), int(r["io_bytes"]), num("mean_mbps"), num("sd_mbps"),
                num("mean_j_per_100mb"), num("sd_j"), int(r["runs"]),
            )
        )
    return SweepResult(cells)


def read_report(path: str | Path) -> SweepResult:
    path = Path(path)
    return parse_report(path.read_text(encoding="utf-8"), "json" if path.suffix == ".json" else "csv")


def recommend_from_report(path: str | Path, objective: str = "min_energy", floor_mbps: float | None = None) -> TransferPlan:
    return recommend_plan(read_report(path).grid(), objective, floor_mbps)


# -- plot data -----------------------------------------------------------------------

_AXES = {
    FigureKind.THROUGHPUT_VS_CC: ("cc", "mean_mbps", "sd_mbps", "concurrency [files]", "throughput [Mbps]"),
    FigureKind.ENERGY_VS_CC: ("cc", "mean_j_per_100mb", "sd_j", "concurrency [files]", "energy [J/100MB]"),
    FigureKind.THROUGHPUT_VS_P: ("p", "mean_mbps", "sd_mbps", "parallelism [streams/file]", "throughput [Mbps]"),
    FigureKind.ENERGY_VS_P: ("p", "mean_j_per_100mb", "sd_j", "parallelism [streams/file]", "energy [J/100MB]"),
}


def _levels(cells: Iterable[CellStats], attr: str) -> list[int]:
    return sorted({getattr(c, attr) for c in cells})


def plot_text(result: SweepResult, figure_kind: FigureKind | str) -> str:
    kind = FigureKind(figure_kind)
    cells = result.cells
    if kind is FigureKind.SURFACE_CC_P:
        if len(_levels(cells, "cc")) < 2 or len(_levels(cells, "p")) < 2:
            raise ValueError("surface plot needs at least two cc and two p levels")
        lines = [
            "# throughput and energy over concurrency x parallelism",
            "# columns: cc [files]  p [streams/file]  throughput [Mbps]  energy [J/100MB]",
        ]
        for io_level in _levels(cells, "io_bytes"):
            lines.append(f"# io_bytes = {io_level}")
            for cc in _levels(cells, "cc"):
                for c in (c for c in cells if c.io_bytes == io_level and c.cc == cc):
                    lines.append(f"{c.cc} {c.p} {_fmt(c.mean_mbps)} {_fmt(c.mean_j_per_100mb)}")
                lines.append("")
            lines.append("")
        return "\n".join(lines).rstrip("\n") + "\n"

    x, y, sd, x_label, y_label = _AXES[kind]
    if len(_levels(cells, x)) < 2:
        raise ValueError(f"sweep has a single {x} level; nothing to plot against")
    other = [a for a in ("cc", "p", "io_bytes") if a != x]
    lines = [f"# {y_label} vs {x_label}", f"# columns: {x_label}  {y_label}  sd"]
    groups = sorted({tuple(getattr(c, a) for a in other) for c in cells})
    for gi, g in enumerate(groups):
        if gi:
            lines += ["", ""]
        lines.append("# " + "  ".join(f"{a} = {v}" for a, v in zip(other, g)))
        for c in cells:
            if tuple(getattr(c, a) for a in other) == g:
                lines.append(f"{getattr(c, x)} {_fmt(getattr(c, y))} {_fmt(getattr(c, sd))}")
    return "\n".join(lines) + "\n"


def emit_plot_data(result: SweepResult, figure_kind: FigureKind | str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(plot_text(result, figure_kind), encoding="utf-8")
    return path


# -- live fixture helper ---------------------------------------------------------------


def start_fixture(
    stack: ExitStack,
    dataset: str,
    seed: int,
    scale: float,
    data_dir: Path | None = None,
    *,
    ranges: bool = True,
    fault_after: int | None = None,
    files_limit: int | None = None,
    port: int = 0,
) -> FixtureServer:
    """Generate a dataset (if needed) and serve it for the lifetime of ``stack``."""
    if data_dir is None:
        data_dir = Path(stack.enter_context(tempfile.TemporaryDirectory(prefix="xfer-data-")))
    spec = get_spec(dataset)
    if files_limit:
        spec = spec.subset(min(files_limit, spec.file_count))
    generate_dataset(spec, seed, scale, data_dir)
    server = FixtureServer(data_dir, ranges=ranges, fault_after=fault_after, port=port)
    return stack.enter_context(server)


__all__ = [
    "CellStats",
    "ExperimentConfig",
    "FigureKind",
    "Mode",
    "SweepResult",
    "emit_plot_data",
    "emit_report",
    "parse_report",
    "read_report",
    "recommend_from_report",
    "run_experiment",
]
