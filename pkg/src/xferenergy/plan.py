"""Transfer plans and byte-range chunking shared by the engine and the simulator."""

from __future__ import annotations

from dataclasses import dataclass

KB = 1024


@dataclass(frozen=True, order=True)
class TransferPlan:
    """Application-layer knobs: files in flight, range streams per file, I/O unit."""

    concurrency: int = 1
    parallelism: int = 1
    io_request_bytes: int = 16 * KB

    def __post_init__(self) -> None:
        for name in ("concurrency", "parallelism", "io_request_bytes"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


def plan_chunks(file_size: int, parallelism: int) -> list[tuple[int, int]]:
    """Split ``[0, file_size)`` into inclusive ``(start, end)`` ranges.

    Produces ``min(parallelism, file_size)`` ranges whose sizes differ by at
    most one byte, larger ranges first.
    """
    if file_size < 0:
        raise ValueError("file_size must be non-negative")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    n = min(parallelism, file_size)
    if n == 0:
        return []
    base, extra = divmod(file_size, n)
    ranges = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size - 1))
        start += size
    return ranges
