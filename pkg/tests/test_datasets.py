from __future__ import annotations

import hashlib
from fractions import Fraction

import pytest

from xferenergy.datasets import (
    GiB,
    KiB,
    MiB,
    DatasetSpec,
    InsufficientSpaceError,
    builtin_specs,
    generate_dataset,
    get_spec,
    read_manifest,
    sample_sizes,
)


def test_six_builtin_specs():
    specs = {s.name: s for s in builtin_specs()}
    assert list(specs) == ["HTML", "IMAGE", "VIDEO", "32GB", "3GB", "10GB"]
    html = specs["HTML"]
    assert html.file_count == 1500
    assert (html.min_bytes, html.max_bytes) == (102 * KiB, 153 * KiB)
    assert html.mean_target_bytes == 128 * KiB
    assert (specs["IMAGE"].file_count, specs["VIDEO"].file_count, specs["32GB"].file_count) == (200, 64, 32)
    three = specs["3GB"]
    assert three.file_count == 1 and three.min_bytes == three.max_bytes == 3 * GiB
    assert specs["10GB"].max_bytes == 10 * GiB


def test_builtin_totals_sum_table_values():
    total_mib = sum(s.declared_total_bytes for s in builtin_specs()) / MiB
    assert total_mib == 196 + 128 + 1124 + 32768 + 3072 + 10240


def test_spec_invariants():
    with pytest.raises(ValueError):
        DatasetSpec("bad", 2, 10, 5, 20)
    with pytest.raises(ValueError):
        DatasetSpec("bad", 10, 100, 200, 5000)
    with pytest.raises(KeyError):
        get_spec("AUDIO")


def test_html_sizes_bounds_and_mean():
    sizes = sample_sizes(get_spec("HTML"), 7)
    assert len(sizes) == 1500
    assert all(102 * KiB <= s <= 153 * KiB for s in sizes)
    assert abs(sum(sizes) / len(sizes) - 128 * KiB) <= 0.05 * 128 * KiB


def test_video_scaled_bounds():
    sizes = sample_sizes(get_spec("VIDEO"), 1, Fraction(1, 64))
    assert len(sizes) == 64
    assert all(160 * KiB <= s <= 320 * KiB for s in sizes)


def test_scale_too_small():
    with pytest.raises(ValueError):
        sample_sizes(get_spec("HTML"), 1, 1e-7)
    with pytest.raises(ValueError):
        sample_sizes(get_spec("HTML"), 1, 1.5)


def test_generate_deterministic_and_digests(tmp_path):
    spec = get_spec("HTML").subset(12)
    a = generate_dataset(spec, 7, Fraction(1, 32), tmp_path / "a")
    b = generate_dataset(spec, 7, Fraction(1, 32), tmp_path / "b")
    assert a == b
    assert read_manifest(tmp_path / "a" / "manifest.csv") == a
    lo, hi = -(-102 * KiB // 32), 153 * KiB // 32
    for e in a:
        data = (tmp_path / "a" / e.name).read_bytes()
        assert len(data) == e.bytes and lo <= e.bytes <= hi
        assert hashlib.sha256(data).hexdigest() == e.digest
        assert data == (tmp_path / "b" / e.name).read_bytes()
    c = generate_dataset(spec, 8, Fraction(1, 32), tmp_path / "c")
    assert [e.digest for e in c] != [e.digest for e in a]


def test_insufficient_space(tmp_path, monkeypatch):
    import shutil
    from collections import namedtuple

    usage = namedtuple("usage", "total used free")
    monkeypatch.setattr(shutil, "disk_usage", lambda p: usage(10, 10, 0))
    with pytest.raises(InsufficientSpaceError) as info:
        generate_dataset(get_spec("HTML").subset(3), 1, 0.01, tmp_path)
    assert info.value.required > 0
