"""Byte transports between the master and its workers.

Both transports move serialized frames, so an in-process run and a socket run
decode the same bytes and give bit-identical results.
"""
from __future__ import annotations

import contextlib
import socket
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, Mapping, Sequence

from ..errors import InvalidArgumentError, TransportError
from .wire import read_frame, write_frame
from .worker import Worker

DEFAULT_TIMEOUT = 30.0


class WorkerUnavailable(Exception):
    """A worker did not answer (dead, disconnected or timed out)."""


class Transport:
    """Round-trips one request per worker, concurrently, and waits for all."""

    server_indices: tuple[int, ...] = ()

    def roundtrip(self, server_index: int, blob: bytes) -> bytes | None:
        raise NotImplementedError

    def exchange(self, requests: Mapping[int, bytes]) -> dict[int, bytes | BaseException | None]:
        """Send every request, then block until every worker answered or failed.

        The returned mapping holds the reply bytes, None for a worker that
        closed without replying (after SHUTDOWN), or the exception raised.
        """
        def call(item):
            idx, blob = item
            try:
                return idx, self.roundtrip(idx, blob)
            except (WorkerUnavailable, TransportError, OSError) as exc:
                return idx, exc

        items = sorted(requests.items())
        if len(items) == 1:
            return dict([call(items[0])])
        with ThreadPoolExecutor(max_workers=len(items)) as pool:
            return dict(pool.map(call, items))

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessTransport(Transport):
    """Workers living in this process; ``kill`` simulates a crashed server."""

    def __init__(self, n_workers: int):
        if n_workers < 1:
            raise InvalidArgumentError("need at least one worker")
        self.workers = {i: Worker(i) for i in range(1, n_workers + 1)}
        self.server_indices = tuple(self.workers)
        self.dead: set[int] = set()

    def kill(self, server_index: int) -> None:
        self.dead.add(server_index)

    def roundtrip(self, server_index: int, blob: bytes) -> bytes | None:
        if server_index in self.dead or server_index not in self.workers:
            raise WorkerUnavailable(f"worker {server_index} is not running")
        return self.workers[server_index].handle_bytes(bytes(blob))


class SocketTransport(Transport):
    """One TCP connection per worker, addressed in server order 1..N."""

    def __init__(self, addresses: Sequence[tuple[str, int]], timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.server_indices = tuple(range(1, len(addresses) + 1))
        self._conns: dict[int, tuple[socket.socket, object]] = {}
        try:
            for idx, addr in zip(self.server_indices, addresses):
                sock = socket.create_connection(addr, timeout=timeout)
                sock.settimeout(timeout)
                self._conns[idx] = (sock, sock.makefile("rwb"))
        except OSError as exc:
            self.close()
            raise TransportError(f"cannot connect to worker at {addr}: {exc}") from exc

    def roundtrip(self, server_index: int, blob: bytes) -> bytes | None:
        if server_index not in self._conns:
            raise WorkerUnavailable(f"no connection to worker {server_index}")
        _, stream = self._conns[server_index]
        try:
            write_frame(stream, blob)
            reply = read_frame(stream)
        except socket.timeout as exc:
            raise WorkerUnavailable(f"worker {server_index} timed out after {self.timeout}s") from exc
        except (ConnectionError, BrokenPipeError) as exc:
            raise WorkerUnavailable(f"worker {server_index} disconnected: {exc}") from exc
        return reply

    def close(self) -> None:
        for sock, stream in self._conns.values():
            with contextlib.suppress(OSError):
                stream.close()
            with contextlib.suppress(OSError):
                sock.close()
        self._conns.clear()


@contextlib.contextmanager
def local_worker_processes(n_workers: int, host: str = "127.0.0.1") -> Iterator[list]:
    """Start ``n_workers`` worker processes on free local ports.

    Yields ``[(process, (host, port)), ...]``; processes are terminated on exit.
    """
    procs = []
    try:
        for idx in range(1, n_workers + 1):
            proc = subprocess.Popen(
                [sys.executable, "-c", "import sys; from analog_shards.runtime.worker import main; sys.exit(main())",
                 "--listen", f"{host}:0", "--server-index", str(idx)],
                stdout=subprocess.PIPE, text=True,
            )
            line = proc.stdout.readline().split()
            if len(line) != 2 or line[0] != "listening":
                proc.kill()
                raise TransportError(f"worker {idx} failed to start")
            whost, port = line[1].rsplit(":", 1)
            procs.append((proc, (whost, int(port))))
        yield procs
    finally:
        for proc, _ in procs:
            if proc.poll() is None:
                proc.terminate()
            with contextlib.suppress(subprocess.TimeoutExpired):
                proc.wait(timeout=5)
            if proc.stdout:
                proc.stdout.close()
