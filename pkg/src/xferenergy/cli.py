"""``xferenergy`` command line: sweeps, reports, plot data and the test fixture.

Exit codes: 0 when every cell succeeded, 2 when some cells failed (the report
is still written), 1 on fatal errors such as bad arguments or an unreachable
server.
"""

from __future__ import annotations

import argparse
import http.client
import logging
import re
import sys
from contextlib import ExitStack
from pathlib import Path

from . import __version__
from .bench import (
    DEFAULT_IO,
    DEFAULT_LEVELS,
    ExperimentConfig,
    FigureKind,
    Mode,
    emit_plot_data,
    report_text,
    run_experiment,
    start_fixture,
)

log = logging.getLogger("xferenergy")

_SIZE_RE = re.compile(r"^\s*(\d+)\s*(k|kb|kib|m|mb|mib)?\s*$", re.IGNORECASE)
_UNITS = {None: 1, "k": 1024, "kb": 1024, "kib": 1024, "m": 1 << 20, "mb": 1 << 20, "mib": 1 << 20}


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _size_list(text: str) -> tuple[int, ...]:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        m = _SIZE_RE.match(item)
        if not m or int(m.group(1)) < 1:
            raise argparse.ArgumentTypeError(f"bad I/O size {item!r} (e.g. 8K, 64KB, 4096)")
        unit = m.group(2).lower() if m.group(2) else None
        out.append(int(m.group(1)) * _UNITS[unit])
    if not out:
        raise argparse.ArgumentTypeError("empty I/O size list")
    return tuple(out)


def _fixture_mode(text: str) -> tuple[str, int | None]:
    if text == "serve":
        return ("serve", None)
    m = re.fullmatch(r"fault:(\d+)", text)
    if not m:
        raise argparse.ArgumentTypeError("expected 'serve' or 'fault:<bytes>'")
    return ("fault", int(m.group(1)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="xferenergy",
        description="Throughput/energy sweeps over concurrency, parallelism and I/O size.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--mode", choices=[m.value for m in Mode], help="live downloads or the simulator (default: sim)")
    ap.add_argument("--dataset", default="HTML", help="builtin dataset name (default: HTML)")
    ap.add_argument("--scale", type=float, default=1.0, help="file size scale factor")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--files", type=int, default=None, help="use only the first N files of the dataset")
    ap.add_argument("--cc", type=_int_list, default=DEFAULT_LEVELS, help="concurrency levels, e.g. 1,2,4")
    ap.add_argument("--p", type=_int_list, default=DEFAULT_LEVELS, help="parallelism levels")
    ap.add_argument("--io", type=_size_list, default=DEFAULT_IO, help="I/O request sizes, e.g. 1K,8K,64K")
    ap.add_argument("--reps", type=int, default=5, help="repetitions per cell (default: 5)")
    ap.add_argument("--server", help="base URL serving the dataset and manifest.csv (live mode)")
    ap.add_argument("--scenario", default="sydney", help="scenario file or builtin name (sim mode)")
    ap.add_argument("--trace-dir", type=Path, help="directory of captured power traces (live mode)")
    ap.add_argument("--out", type=Path, help="report path (default: stdout)")
    ap.add_argument("--format", choices=["csv", "json"], default="csv")
    ap.add_argument("--plot", choices=[k.value for k in FigureKind], help="also write plot data next to --out")
    ap.add_argument("--fixture", type=_fixture_mode, help="'serve' or 'fault:<bytes>': run the local HTTP fixture")
    ap.add_argument("--no-ranges", action="store_true", help="fixture ignores Range headers")
    ap.add_argument("--port", type=int, default=0, help="fixture port (default: any free port)")
    ap.add_argument("--data-dir", type=Path, help="where the fixture keeps the generated dataset")
    ap.add_argument("--cooldown", type=float, help="seconds between repetitions (default: 0 sim, 5 live)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _plot_path(out: Path | None, kind: str) -> Path:
    if out is None:
        return Path(f"sweep.{kind}.dat")
    return out.with_name(f"{out.stem}.{kind}.dat")


def _run(args: argparse.Namespace, stack: ExitStack) -> int:
    if args.fixture and args.server:
        raise ValueError("--fixture and --server are mutually exclusive")
    if args.fixture and args.mode == Mode.SIM.value:
        raise ValueError("--fixture only applies to live mode")

    server = args.server
    if args.fixture:
        kind, fault_after = args.fixture
        srv = start_fixture(
            stack,
            args.dataset,
            args.seed,
            args.scale,
            args.data_dir,
            ranges=not args.no_ranges,
            fault_after=fault_after,
            files_limit=args.files,
            port=args.port,
        )
        if args.mode is None:
            print(f"serving {args.dataset} at {srv.url} (ctrl-c to stop)", flush=True)
            try:
                srv.wait()
            except KeyboardInterrupt:
                pass
            return 0
        server = srv.url

    config = ExperimentConfig(
        mode=Mode(args.mode or Mode.SIM.value),
        dataset=args.dataset,
        scale=args.scale,
        seed=args.seed,
        cc=args.cc,
        p=args.p,
        io=args.io,
        repetitions=args.reps,
        server=server,
        scenario=args.scenario,
        trace_dir=args.trace_dir,
        out=args.out,
        cooldown_s=args.cooldown,
        files_limit=args.files,
    )
    result = run_experiment(config)
    text = report_text(result, args.format)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")
    if args.plot:
        path = emit_plot_data(result, args.plot, _plot_path(args.out, args.plot))
        log.info("plot data written to %s", path)
    for cell in result.failed:
        print(f"cell cc={cell.cc} p={cell.p} io={cell.io_bytes} failed: {cell.error}", file=sys.stderr)
    return 2 if result.failed else 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        with ExitStack() as stack:
            return _run(args, stack)
    except (ValueError, KeyError, OSError, http.client.HTTPException) as exc:
        print(f"xferenergy: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
