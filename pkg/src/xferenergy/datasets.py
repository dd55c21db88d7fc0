"""Synthetic datasets shaped like the HTML/IMAGE/VIDEO/large-file workloads."""

from __future__ import annotations

import csv
import hashlib
import math
import shutil
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

KiB = 1024
MiB = 1024**2
GiB = 1024**3

MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ("name", "bytes", "digest")
_WRITE_BLOCK = 4 * MiB


class InsufficientSpaceError(OSError):
    def __init__(self, required: int, available: int) -> None:
        super().__init__(f"dataset needs {required} bytes, only {available} available")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    file_count: int
    min_bytes: int
    max_bytes: int
    declared_total_bytes: int
    avg_bytes: int | None = None

    def __post_init__(self) -> None:
        if self.file_count < 1:
            raise ValueError("file_count must be >= 1")
        if self.min_bytes > self.max_bytes:
            raise ValueError("min_bytes exceeds max_bytes")
        lo = self.file_count * self.min_bytes * 0.98
        hi = self.file_count * self.max_bytes * 1.02
        if not lo <= self.declared_total_bytes <= hi:
            raise ValueError(f"{self.name}: declared total inconsistent with count and bounds")

    @property
    def mean_target_bytes(self) -> float:
        if self.avg_bytes is not None:
            return float(self.avg_bytes)
        return (self.min_bytes + self.max_bytes) / 2

    def subset(self, file_count: int) -> DatasetSpec:
        """Same size bounds, fewer files."""
        total = round(self.declared_total_bytes * file_count / self.file_count)
        return replace(self, file_count=file_count, declared_total_bytes=total)


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    bytes: int
    digest: str


_BUILTIN = (
    DatasetSpec("HTML", 1500, 102 * KiB, 153 * KiB, 196 * MiB, 128 * KiB),
    DatasetSpec("IMAGE", 200, 524 * KiB, 786 * KiB, 128 * MiB, 640 * KiB),
    DatasetSpec("VIDEO", 64, 10 * MiB, 20 * MiB, 1124 * MiB, round(16.4 * MiB)),
    DatasetSpec("32GB", 32, 1 * GiB, 1 * GiB, 32 * GiB, 1 * GiB),
    DatasetSpec("3GB", 1, 3 * GiB, 3 * GiB, 3 * GiB, 3 * GiB),
    DatasetSpec("10GB", 1, 10 * GiB, 10 * GiB, 10 * GiB, 10 * GiB),
)


def builtin_specs() -> list[DatasetSpec]:
    return list(_BUILTIN)


def get_spec(name: str) -> DatasetSpec:
    for spec in _BUILTIN:
        if spec.name.lower() == name.lower():
            return spec
    raise KeyError(f"unknown dataset {name!r}; choose from {[s.name for s in _BUILTIN]}")


def scaled_bounds(spec: DatasetSpec, scale: float | Fraction) -> tuple[int, int]:
    scale = Fraction(scale).limit_denominator(10**9)
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    lo = math.ceil(spec.min_bytes * scale)
    hi = math.floor(spec.max_bytes * scale)
    if spec.min_bytes * scale < 1:
        raise ValueError("scale too small: minimum file size drops below one byte")
    return lo, max(lo, hi)


def sample_sizes(spec: DatasetSpec, seed: int, scale: float | Fraction = 1) -> list[int]:
    """File sizes drawn uniformly from the scaled ``[min, max]`` interval."""
    lo, hi = scaled_bounds(spec, scale)
    rng = np.random.Generator(np.random.PCG64([seed, 0]))
    return [int(x) for x in rng.integers(lo, hi, size=spec.file_count, endpoint=True)]


def file_name(spec: DatasetSpec, index: int) -> str:
    return f"{spec.name.lower()}_{index:05d}.bin"


def _write_file(path: Path, size: int, seed: int, index: int) -> str:
    rng = np.random.Generator(np.random.PCG64([seed, 1, index]))
    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        left = size
        while left:
            block = rng.bytes(min(left, _WRITE_BLOCK))
            fh.write(block)
            digest.update(block)
            left -= len(block)
    return digest.hexdigest()


def generate_dataset(
    spec: DatasetSpec, seed: int, scale: float | Fraction, out_dir: str | Path
) -> list[ManifestEntry]:
    """Write the dataset files plus ``manifest.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = sample_sizes(spec, seed, scale)
    required = sum(sizes)
    free = shutil.disk_usage(out).free
    if required > free:
        raise InsufficientSpaceError(required, free)
    entries = []
    for i, size in enumerate(sizes):
        name = file_name(spec, i)
        entries.append(ManifestEntry(name, size, _write_file(out / name, size, seed, i)))
    write_manifest(entries, out / MANIFEST_NAME)
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            w.writerow((e.name, e.bytes, e.digest))


def parse_manifest(text: str) -> list[ManifestEntry]:
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(rows[0]) != MANIFEST_HEADER:
        raise ValueError("manifest must start with 'name,bytes,digest'")
    return [ManifestEntry(r[0], int(r[1]), r[2]) for r in rows[1:] if r]


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))
