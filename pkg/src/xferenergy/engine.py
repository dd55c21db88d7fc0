"""Live HTTP download engine.

Up to ``concurrency`` files are in flight at once. Each file is split into
``parallelism`` byte ranges, each fetched over its own connection. Reads
from the socket and writes to disk happen in ``io_request_bytes`` units.
When a file finishes, its slot picks up the next job right away.
"""

from __future__ import annotations

import hashlib
import http.client
import logging
import os
import queue
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import urlsplit

from .plan import TransferPlan, plan_chunks

log = logging.getLogger(__name__)

Clock = Callable[[], float]

CHUNK_ATTEMPTS = 2
_CONTENT_RANGE_RE = re.compile(r"bytes\s+(\d+)-(\d+)/(\d+|\*)")


class TransferError(RuntimeError):
    """Every job in a batch failed."""

    def __init__(self, message: str, result: TransferResult) -> None:
        super().__init__(message)
        self.result = result


class ChunkError(IOError):
    pass


@dataclass(frozen=True)
class FileJob:
    source_url: str
    destination_path: Path
    expected_bytes: int | None = None
    checksum: str | None = None

    def __post_init__(self) -> None:
        parts = urlsplit(self.source_url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"not an http(s) URL: {self.source_url!r}")
        object.__setattr__(self, "destination_path", Path(self.destination_path))


@dataclass(frozen=True)
class ChunkTask:
    job: FileJob
    range_start: int
    range_end: int

    @property
    def length(self) -> int:
        return self.range_end - self.range_start + 1


@dataclass
class FileResult:
    url: str
    path: Path
    start: float
    end: float
    bytes: int
    parallelism: int
    io_ops: int = 0
    max_io_bytes: int = 0
    ok: bool = True


@dataclass
class TransferResult:
    total_bytes: int
    wall_duration_s: float
    files: list[FileResult]
    failures: list[tuple[str, str]]
    t_start: float
    t_end: float
    max_concurrent_files: int = 0

    @property
    def avg_throughput_mbps(self) -> float:
        if self.wall_duration_s <= 0:
            return 0.0
        return self.total_bytes * 8 / self.wall_duration_s / 1e6


def _connect(url: str, timeout: float) -> tuple[http.client.HTTPConnection, str]:
    parts = urlsplit(url)
    cls = http.client.HTTPSConnection if parts.scheme == "https" else http.client.HTTPConnection
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return cls(parts.netloc, timeout=timeout), path


def _probe(url: str, timeout: float) -> tuple[bool, int | None]:
    """One-byte range request; returns (ranges honored, total size if known)."""
    conn, path = _connect(url, timeout)
    try:
        conn.request("GET", path, headers={"Range": "bytes=0-0"})
        resp = conn.getresponse()
        if resp.status == 206:
            m = _CONTENT_RANGE_RE.match(resp.getheader("Content-Range", ""))
            size = int(m.group(3)) if m and m.group(3) != "*" else None
            return True, size
        if resp.status == 200:
            length = resp.getheader("Content-Length")
            return False, int(length) if length is not None else None
        if resp.status == 416:
            return True, 0
        raise http.client.HTTPException(f"probe of {url} returned HTTP {resp.status}")
    finally:
        conn.close()


def probe_range_support(url: str, timeout: float = 10.0) -> bool:
    """Whether ``url`` answers a one-byte range request with 206 Partial Content.

    Network failures propagate as ``OSError`` or ``http.client.HTTPException``,
    keeping "unreachable" distinct from "no range support".
    """
    return _probe(url, timeout)[0]


def verify_integrity(destination_path: str | Path, expected_digest: str, algorithm: str = "sha256") -> bool:
    h = hashlib.new(algorithm)
    with open(destination_path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest() == expected_digest.lower()


@dataclass
class _IoStats:
    ops: int = 0
    max_bytes: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def add(self, n: int) -> None:
        with self.lock:
            self.ops += 1
            self.max_bytes = max(self.max_bytes, n)


class TransferEngine:
    """Executes one batch of jobs under a plan. Use one instance per batch."""

    def __init__(
        self,
        plan: TransferPlan,
        clock: Clock = time.monotonic,
        timeout: float = 30.0,
    ) -> None:
        self.plan = plan
        self.clock = clock
        self.timeout = timeout
        self._slots: dict[int, FileJob | None] = {}
        self._slot_lock = threading.Lock()
        self._max_files = 0
        self._used = False

    # -- slot table -------------------------------------------------------

    def _occupy(self, slot: int, job: FileJob | None) -> None:
        with self._slot_lock:
            self._slots[slot] = job
            busy = sum(1 for j in self._slots.values() if j is not None)
            self._max_files = max(self._max_files, busy)

    # -- streams ------------------------------------------------------------

    def _fetch(self, job: FileJob, fd: int, start: int, end: int | None, stats: _IoStats) -> int:
        """GET one range (or the whole body when ``end`` is None) into ``fd``."""
        io = self.plan.io_request_bytes
        conn, path = _connect(job.source_url, self.timeout)
        try:
            headers = {} if end is None else {"Range": f"bytes={start}-{end}"}
            conn.request("GET", path, headers=headers)
            resp = conn.getresponse()
            if end is not None:
                if resp.status != 206:
                    raise ChunkError(f"expected 206 for range {start}-{end}, got {resp.status}")
                m = _CONTENT_RANGE_RE.match(resp.getheader("Content-Range", ""))
                if not m or int(m.group(1)) != start or int(m.group(2)) != end:
                    raise ChunkError("server returned a different range than requested")
                want = end - start + 1
            else:
                if resp.status != 200:
                    raise ChunkError(f"HTTP {resp.status}")
                length = resp.getheader("Content-Length")
                want = int(length) if length is not None else None
            offset = start
            got = 0
            while want is None or got < want:
                n = io if want is None else min(io, want - got)
                data = resp.read(n)
                if not data:
                    break
                os.pwrite(fd, data, offset)
                stats.add(len(data))
                offset += len(data)
                got += len(data)
            if want is not None and got != want:
                raise ChunkError(f"connection closed after {got} of {want} bytes")
            return got
        except (OSError, http.client.HTTPException) as exc:
            raise ChunkError(str(exc)) from exc
        finally:
            conn.close()

    def _fetch_retrying(self, job, fd, start, end, stats) -> int:
        for attempt in range(CHUNK_ATTEMPTS):
            try:
                return self._fetch(job, fd, start, end, stats)
            except ChunkError as exc:
                err = exc
                log.info("chunk %s-%s of %s failed (attempt %d): %s", start, end, job.source_url, attempt + 1, exc)
        raise err

    def _download(self, job: FileJob, pool: ThreadPoolExecutor) -> FileResult:
        t0 = self.clock()
        p = self.plan.parallelism
        size = job.expected_bytes
        if p > 1:
            ranges_ok, size = _probe(job.source_url, self.timeout)
            if not ranges_ok:
                log.warning("%s does not honor byte ranges; using one stream", job.source_url)
                p = 1
            if job.expected_bytes is not None and size is not None and size != job.expected_bytes:
                raise ChunkError(f"server reports {size} bytes, expected {job.expected_bytes}")
        dest = job.destination_path
        tmp = dest.with_name(dest.name + ".part")
        dest.parent.mkdir(parents=True, exist_ok=True)
        stats = _IoStats()
        fd = os.open(tmp, os.O_RDWR | os.O_CREAT | os.O_TRUNC, 0o644)
        try:
            if p == 1:
                got = self._fetch_retrying(job, fd, 0, None, stats)
                chunks_used = 1
            else:
                chunks = [ChunkTask(job, a, b) for a, b in plan_chunks(size or 0, p)]
                futures = [pool.submit(self._fetch_retrying, job, fd, c.range_start, c.range_end, stats) for c in chunks]
                errors = []
                got = 0
                for f in futures:
                    try:
                        got += f.result()
                    except ChunkError as exc:
                        errors.append(exc)
                if errors:
                    raise errors[0]
                chunks_used = max(len(chunks), 1)
            os.fsync(fd)
        except BaseException:
            os.close(fd)
            tmp.unlink(missing_ok=True)
            raise
        os.close(fd)
        if job.expected_bytes is not None and got != job.expected_bytes:
            tmp.unlink(missing_ok=True)
            raise ChunkError(f"received {got} bytes, expected {job.expected_bytes}")
        if job.checksum is not None and not verify_integrity(tmp, job.checksum):
            tmp.unlink(missing_ok=True)
            raise ChunkError("checksum mismatch")
        os.replace(tmp, dest)
        return FileResult(job.source_url, dest, t0, self.clock(), got, chunks_used, stats.ops, stats.max_bytes)

    # -- scheduler ------------------------------------------------------------

    def execute(self, jobs: Sequence[FileJob]) -> TransferResult:
        if self._used:
            raise RuntimeError("a TransferEngine runs a single batch; create a new instance")
        self._used = True
        if not jobs:
            raise ValueError("no jobs given")
        todo: queue.SimpleQueue[tuple[int, FileJob]] = queue.SimpleQueue()
        for item in enumerate(jobs):
            todo.put(item)
        results: list[FileResult | None] = [None] * len(jobs)
        failures: list[tuple[str, str]] = []
        fail_lock = threading.Lock()
        cc = min(self.plan.concurrency, len(jobs))

        def slot_worker(slot: int, pool: ThreadPoolExecutor) -> None:
            while True:
                try:
                    idx, job = todo.get_nowait()
                except queue.Empty:
                    self._occupy(slot, None)
                    return
                self._occupy(slot, job)
                try:
                    results[idx] = self._download(job, pool)
                except (ChunkError, OSError, http.client.HTTPException) as exc:
                    with fail_lock:
                        failures.append((job.source_url, str(exc)))
                    log.warning("download of %s failed: %s", job.source_url, exc)

        t_start = self.clock()
        with ThreadPoolExecutor(max_workers=cc * self.plan.parallelism, thread_name_prefix="stream") as pool:
            slots = [threading.Thread(target=slot_worker, args=(i, pool), name=f"slot-{i}") for i in range(cc)]
            for s in slots:
                s.start()
            for s in slots:
                s.join()
        t_end = self.clock()
        done = [r for r in results if r is not None]
        result = TransferResult(
            total_bytes=sum(r.bytes for r in done),
            wall_duration_s=t_end - t_start,
            files=done,
            failures=failures,
            t_start=t_start,
            t_end=t_end,
            max_concurrent_files=self._max_files,
        )
        if not done:
            raise TransferError(f"all {len(jobs)} downloads failed", result)
        return result


def execute_transfer(jobs: Sequence[FileJob], plan: TransferPlan, clock: Clock = time.monotonic, **kwargs) -> TransferResult:
    return TransferEngine(plan, clock, **kwargs).execute(jobs)
