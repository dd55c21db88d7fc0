from __future__ import annotations

import csv
import json
import subprocess
import sys
import urllib.request

import pytest

from xferenergy.bench import read_report
from xferenergy.cli import _size_list, build_parser, main
from xferenergy.datasets import parse_manifest


def test_io_sizes_parse():
    assert _size_list("1K,8KB,64KiB,4096") == (1024, 8192, 65536, 4096)
    assert _size_list("1M") == (1 << 20,)
    with pytest.raises(Exception):
        _size_list("eight")


def test_parser_defaults():
    args = build_parser().parse_args([])
    assert args.cc == (1, 2, 4, 8, 16, 32) and args.p == args.cc
    assert args.io == tuple(k * 1024 for k in (1, 2, 4, 8, 16, 32, 64))
    assert args.reps == 5 and args.format == "csv"


def test_sim_sweep_csv_and_plot(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["--mode", "sim", "--scale", "0.0625", "--cc", "1,2,4,8,16,32", "--p", "1", "--io", "16K",
               "--reps", "2", "--out", str(out), "--plot", "throughput_vs_cc"])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6 and all(r["runs"] == "2" for r in rows)
    dat = (tmp_path / "sweep.throughput_vs_cc.dat").read_text()
    assert len([ln for ln in dat.splitlines() if ln and not ln.startswith("#")]) == 6


def test_sim_json_to_stdout(capsys):
    assert main(["--scale", "0.0625", "--cc", "1,4", "--p", "1", "--io", "8K", "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [(r["cc"], r["runs"]) for r in rows] == [(1, 5), (4, 5)]


def test_live_in_process_fixture(tmp_path):
    out = tmp_path / "live.csv"
    rc = main(["--mode", "live", "--fixture", "serve", "--scale", "0.0625", "--files", "6", "--cc", "1,2",
               "--p", "1,4", "--io", "4K", "--reps", "1", "--cooldown", "0", "--out", str(out)])
    assert rc == 0
    res = read_report(out)
    assert len(res.cells) == 4 and all(c.runs == 1 and c.mean_mbps > 0 for c in res.cells)


def test_live_no_ranges_still_succeeds(tmp_path):
    out = tmp_path / "live.csv"
    rc = main(["--mode", "live", "--fixture", "serve", "--no-ranges", "--scale", "0.0625", "--files", "4",
               "--cc", "2", "--p", "4", "--io", "4K", "--reps", "1", "--cooldown", "0", "--out", str(out)])
    assert rc == 0


def test_partial_failure_exit_code(tmp_path, capsys):
    # a trace exists only for the cc=1 cell, so the cc=2 cell fails
    traces = tmp_path / "traces"
    traces.mkdir()
    lines = ["t_seconds,watts"] + [f"{i / 10!r},{1.0 if not 60 <= i <= 90 else 2.0!r}" for i in range(150)]
    (traces / "cc1_p1_io4096_r0.csv").write_text("\n".join(lines) + "\n")
    rc = main(["--mode", "live", "--fixture", "serve", "--scale", "0.0625", "--files", "3", "--cc", "1,2",
               "--p", "1", "--io", "4K", "--reps", "1", "--cooldown", "0", "--trace-dir", str(traces),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 2
    assert "cc=2" in capsys.readouterr().err
    res = read_report(tmp_path / "r.csv")
    assert res.cells[0].runs == 1 and res.cells[1].runs == 0


def test_all_downloads_dropped_is_partial_failure(tmp_path):
    rc = main(["--mode", "live", "--fixture", "fault:100", "--scale", "0.0625", "--files", "2", "--cc", "1",
               "--p", "1", "--io", "4K", "--reps", "1", "--cooldown", "0", "--out", str(tmp_path / "r.csv")])
    assert rc == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["--mode", "live", "--server", "http://127.0.0.1:9", "--cc", "1", "--p", "1", "--io", "1K", "--cooldown", "0"],
        ["--mode", "sim", "--scenario", "no-such-scenario", "--cc", "1", "--p", "1", "--io", "1K"],
        ["--mode", "live"],
        ["--mode", "sim", "--fixture", "serve"],
    ],
)
def test_fatal_errors_exit_1(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "r.csv")]) == 1


def test_bad_flag_value_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["--cc", "zero"])
    assert info.value.code != 0


def test_fixture_serve_forever(tmp_path):
    proc = subprocess.Popen(
        [sys.executable, "-m", "xferenergy.cli", "--fixture", "serve", "--scale", "0.0625", "--files", "3",
         "--data-dir", str(tmp_path)],
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        url = line.split(" at ")[1].split()[0]
        with urllib.request.urlopen(f"{url}/manifest.csv", timeout=10) as resp:
            entries = parse_manifest(resp.read().decode())
        assert len(entries) == 3
        assert proc.poll() is None
    finally:
        proc.terminate()
        proc.wait(timeout=10)
