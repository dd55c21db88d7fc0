"""Local HTTP server for dataset directories.

Serves files with optional byte-range support and optional fault injection
(drop the connection after N body bytes). Every request is logged with its
open/close times so tests can check how many connections overlapped.
"""

from __future__ import annotations

import logging
import re
import socket
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote, urlsplit

from .datasets import MANIFEST_NAME

log = logging.getLogger(__name__)

_RANGE_RE = re.compile(r"^bytes=(\d*)-(\d*)$")
_BLOCK = 64 * 1024


@dataclass
class RequestLog:
    path: str
    range: str | None
    opened: float
    closed: float | None = None
    status: int | None = None
    dropped: bool = False


@dataclass
class FixtureState:
    root: Path
    ranges: bool = True
    fault_after: int | None = None
    fault_paths: set[str] | None = None
    fault_times: int | None = None
    requests: list[RequestLog] = field(default_factory=list)
    active: int = 0
    max_active: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def take_fault(self, path: str, body_len: int) -> int | None:
        """Byte count after which to drop this response, or None."""
        if self.fault_after is None or body_len <= self.fault_after:
            return None
        # the manifest is control data; faults target dataset files only
        if path.lstrip("/") == MANIFEST_NAME:
            return None
        if self.fault_paths is not None and path.lstrip("/") not in self.fault_paths:
            return None
        with self.lock:
            if self.fault_times is not None:
                if self.fault_times <= 0:
                    return None
                self.fault_times -= 1
        return self.fault_after


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _Server

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        log.debug("fixture: " + format, *args)

    def do_HEAD(self) -> None:
        self._serve(head=True)

    def do_GET(self) -> None:
        self._serve(head=False)

    def _resolve(self) -> Path | None:
        rel = unquote(urlsplit(self.path).path).lstrip("/")
        root = self.server.state.root.resolve()
        target = (root / rel).resolve()
        if root not in target.parents or not target.is_file():
            return None
        return target

    def _serve(self, head: bool) -> None:
        state = self.server.state
        entry = RequestLog(urlsplit(self.path).path, self.headers.get("Range"), time.monotonic())
        with state.lock:
            state.requests.append(entry)
            state.active += 1
            state.max_active = max(state.max_active, state.active)
        try:
            self._respond(entry, head)
        finally:
            with state.lock:
                state.active -= 1
                entry.closed = time.monotonic()

    def _respond(self, entry: RequestLog, head: bool) -> None:
        state = self.server.state
        target = self._resolve()
        if target is None:
            entry.status = 404
            self.send_error(404)
            return
        size = target.stat().st_size
        start, end = 0, size - 1
        status = 200
        header = self.headers.get("Range")
        if state.ranges and header:
            m = _RANGE_RE.match(header.strip())
            if m and (m.group(1) or m.group(2)):
                if m.group(1):
                    start = int(m.group(1))
                    end = min(int(m.group(2)), size - 1) if m.group(2) else size - 1
                else:
                    start = max(size - int(m.group(2)), 0)
                if start >= size or start > end:
                    entry.status = 416
                    self.send_response(416)
                    self.send_header("Content-Range", f"bytes */{size}")
                    self.send_header("Content-Length", "0")
                    self.send_header("Connection", "close")
                    self.end_headers()
                    return
                status = 206
        length = max(end - start + 1, 0)
        entry.status = status
        self.send_response(status)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(length))
        self.send_header("Accept-Ranges", "bytes" if state.ranges else "none")
        if status == 206:
            self.send_header("Content-Range", f"bytes {start}-{end}/{size}")
        self.send_header("Connection", "close")
        self.end_headers()
        self.close_connection = True
        if head:
            return
        drop_at = state.take_fault(entry.path, length)
        sent = 0
        with open(target, "rb") as fh:
            fh.seek(start)
            while sent < length:
                n = min(_BLOCK, length - sent)
                if drop_at is not None:
                    n = min(n, drop_at - sent)
                    if n <= 0:
                        entry.dropped = True
                        self.wfile.flush()
                        self.connection.shutdown(socket.SHUT_RDWR)
                        return
                block = fh.read(n)
                self.wfile.write(block)
                sent += len(block)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128

    def __init__(self, address, state: FixtureState) -> None:
        super().__init__(address, _Handler)
        self.state = state


class FixtureServer:
    """Threaded dataset server, usable as a context manager.

    ``fault_after`` drops any response body longer than that many bytes
    once it has sent them; ``fault_paths`` limits this to given file names
    and ``fault_times`` to a number of occurrences.
    """

    def __init__(
        self,
        root: str | Path,
        *,
        ranges: bool = True,
        fault_after: int | None = None,
        fault_paths: set[str] | None = None,
        fault_times: int | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self.state = FixtureState(Path(root), ranges, fault_after, fault_paths, fault_times)
        self._server = _Server((host, port), self.state)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def requests(self) -> list[RequestLog]:
        with self.state.lock:
            return list(self.state.requests)

    @property
    def max_active(self) -> int:
        return self.state.max_active

    def reset_log(self) -> None:
        with self.state.lock:
            self.state.requests.clear()
            self.state.max_active = self.state.active

    def start(self) -> FixtureServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="fixture", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def wait(self) -> None:
        """Block until the background server thread exits."""
        # short joins keep the main thread responsive to KeyboardInterrupt
        while self._thread is not None and self._thread.is_alive():
            self._thread.join(0.5)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> FixtureServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
