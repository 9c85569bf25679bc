"""Worker side of the protocol: hold shares, evaluate tasks, answer the master.

Run as a TCP server with::

    analog-shards-worker --listen 127.0.0.1:0 --server-index 1

The first line printed is ``listening <host>:<port>``.
"""
from __future__ import annotations

import argparse
import socket
import sys
from typing import Mapping

import numpy as np

from ..errors import AnalogShardsError, FormatError, TransportError
from ..shareio import shares_to_bytes
from ..sharing import ShareSet, polyval
from .wire import (
    EVAL_POLYNOMIAL,
    LR_ITERATION_PRODUCT,
    MessageKind,
    TaskSpec,
    WireMessage,
    read_frame,
    unpack_shares,
    write_frame,
)


class SplitComplex:
    """A complex array kept as two C-contiguous real arrays.

    Products are formed from real BLAS calls, so a share whose imaginary part
    is zero yields exactly the real-arithmetic result.
    """

    def __init__(self, array):
        a = np.asarray(array, dtype=complex)
        self.re = np.ascontiguousarray(a.real)
        self.im = np.ascontiguousarray(a.imag)

    @property
    def shape(self):
        return self.re.shape

    def matvec(self, v: np.ndarray) -> np.ndarray:
        vr, vi = np.ascontiguousarray(v.real), np.ascontiguousarray(v.imag)
        return _assemble(self.re @ vr - self.im @ vi, self.re @ vi + self.im @ vr)

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """``A^T v`` (plain transpose, no conjugation)."""
        vr, vi = np.ascontiguousarray(v.real), np.ascontiguousarray(v.imag)
        return _assemble(self.re.T @ vr - self.im.T @ vi, self.re.T @ vi + self.im.T @ vr)


def _assemble(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    out = np.empty(re.shape, dtype=complex)
    out.real = re
    out.imag = im
    return out


def lr_product(data: SplitComplex, w: np.ndarray) -> np.ndarray:
    """``X^T (X w)`` on shares, the single heavy step of a training iteration."""
    return data.rmatvec(data.matvec(np.asarray(w, dtype=complex)))


def task_flops(task: TaskSpec, input_shapes: Mapping[str, tuple[int, ...]]) -> int:
    """Real floating-point operations a worker spends on ``task``."""
    if task.kind == LR_ITERATION_PRODUCT:
        m, d = input_shapes[task.inputs[0]]
        return 2 * 8 * m * d  # two complex matvecs, 4 real mult-adds each
    size = int(np.prod(input_shapes[task.inputs[0]], dtype=np.int64))
    return 8 * task.degree * size  # one complex multiply-add per Horner step


def worker_eval(slots: Mapping[str, np.ndarray], task: TaskSpec) -> np.ndarray:
    """Evaluate ``task`` on one server's share arrays (pure function)."""
    for name in task.inputs:
        if name not in slots:
            raise FormatError(f"task needs slot {name!r}, which was never received")
    if task.kind == EVAL_POLYNOMIAL:
        if len(task.coefficients) < 1:
            raise FormatError("polynomial task without coefficients")
        return polyval(list(task.coefficients), slots[task.inputs[0]])
    if task.kind == LR_ITERATION_PRODUCT:
        data = slots[task.inputs[0]]
        w = slots[task.inputs[1]]
        split = data if isinstance(data, SplitComplex) else SplitComplex(data)
        if split.re.ndim != 2 or np.shape(w) != (split.shape[1],):
            raise FormatError(f"shape mismatch: data {split.shape}, weights {np.shape(w)}")
        return lr_product(split, w)
    raise FormatError(f"unknown task kind {task.kind!r}")


class Worker:
    """Message handler for one server; keeps the shares it was sent.

    Task identifiers must strictly increase. Slots hold the latest share sent
    under each name, and every task must agree with the parameter digest of
    the shares it reads.
    """

    def __init__(self, server_index: int):
        self.server_index = int(server_index)
        self.slots: dict[str, np.ndarray] = {}
        self._split: dict[str, SplitComplex] = {}
        self.digests: dict[str, bytes] = {}
        self.last_task_id = -1
        self.flops = 0
        self.closed = False

    def _reply(self, kind: MessageKind, task_id: int, payload: bytes = b"") -> WireMessage:
        return WireMessage(kind, task_id, self.server_index, payload)

    def _store(self, slot: str, shares: ShareSet) -> None:
        arr = shares.shares[0]
        self.slots[slot] = arr
        self.digests[slot] = shares.params_digest
        if arr.ndim == 2:
            self._split[slot] = SplitComplex(arr)
        else:
            self._split.pop(slot, None)

    def _run(self, task: TaskSpec) -> np.ndarray:
        for name in task.inputs:
            if name in self.digests and self.digests[name] != task.params_digest:
                raise FormatError(f"slot {name!r} was shared under different parameters")
        view = {k: self._split.get(k, v) for k, v in self.slots.items()}
        out = worker_eval(view, task)
        if tuple(out.shape) != tuple(task.result_shape):
            raise FormatError(f"result shape {out.shape} differs from declared {task.result_shape}")
        self.flops += task_flops(task, {k: np.shape(v) for k, v in self.slots.items()})
        return out

    def handle(self, msg: WireMessage) -> WireMessage | None:
        """Process one message. Returns the reply, or None after SHUTDOWN."""
        if msg.kind == MessageKind.SHUTDOWN:
            self.closed = True
            return None
        if msg.server_index != self.server_index:
            return self._reply(
                MessageKind.ERROR, msg.task_id,
                f"message addressed to server {msg.server_index}, this is {self.server_index}".encode(),
            )
        if msg.task_id <= self.last_task_id:
            return self._reply(
                MessageKind.ERROR, msg.task_id,
                f"task id {msg.task_id} not greater than previous {self.last_task_id}".encode(),
            )
        self.last_task_id = msg.task_id
        try:
            if msg.kind == MessageKind.SHARES:
                slot, shares = unpack_shares(msg.payload, self.server_index)
                self._store(slot, shares)
                return self._reply(MessageKind.RESULT, msg.task_id)
            if msg.kind == MessageKind.TASK:
                task = TaskSpec.from_bytes(msg.payload)
                out = self._run(task)
                result = ShareSet(out[None, ...] if out.ndim else out.reshape(1), task.params_digest,
                                  (self.server_index,))
                return self._reply(MessageKind.RESULT, msg.task_id, shares_to_bytes(result))
            return self._reply(MessageKind.ERROR, msg.task_id, f"unexpected message kind {msg.kind.name}".encode())
        except AnalogShardsError as exc:
            return self._reply(MessageKind.ERROR, msg.task_id, f"{type(exc).__name__}: {exc}".encode())

    def handle_bytes(self, blob: bytes) -> bytes | None:
        try:
            msg = WireMessage.from_bytes(blob)
        except TransportError as exc:
            return self._reply(MessageKind.ERROR, 0, f"TransportError: {exc}".encode()).to_bytes()
        reply = self.handle(msg)
        return None if reply is None else reply.to_bytes()


def serve(host: str, port: int, server_index: int, out=sys.stdout) -> None:
    """Accept one master connection and serve it until SHUTDOWN or disconnect."""
    with socket.create_server((host, port)) as server:
        bound_host, bound_port = server.getsockname()[:2]
        print(f"listening {bound_host}:{bound_port}", file=out, flush=True)
        conn, _ = server.accept()
        worker = Worker(server_index)
        with conn, conn.makefile("rwb") as stream:
            while True:
                try:
                    blob = read_frame(stream)
                except (TransportError, OSError):
                    break
                if blob is None:
                    break
                reply = worker.handle_bytes(blob)
                if reply is None:
                    break
                write_frame(stream, reply)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="analog-shards-worker", description=__doc__.splitlines()[0])
    parser.add_argument("--listen", type=parse_address, required=True, help="host:port (port 0 picks one)")
    parser.add_argument("--server-index", type=int, required=True, help="1-based server index")
    args = parser.parse_args(argv)
    if args.server_index < 1:
        parser.error("--server-index must be >= 1")
    serve(args.listen[0], args.listen[1], args.server_index)
    return 0


if __name__ == "__main__":
    sys.exit(main())
