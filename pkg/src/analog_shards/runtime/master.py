"""Master side: share inputs, dispatch tasks, gather results at a barrier, decode."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..accuracy import accuracy_bound
from ..errors import (
    HypothesisViolatedError,
    InvalidArgumentError,
    ProtocolFailureError,
    TransportError,
)
from ..shareio import shares_from_bytes
from ..sharing import (
    NoiseDraw,
    ProtocolParams,
    ShareSet,
    decode_constant,
    decoder_weights,
    encode_secret,
    sample_truncated_noise,
)
from .transport import InProcessTransport, Transport
from .wire import MessageKind, TaskSpec, WireMessage, lr_task, pack_shares, polynomial_task
from .worker import task_flops

TO_WORKER = "master->worker"
TO_MASTER = "worker->master"


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str
    server_index: int
    kind: str
    task_id: int
    nbytes: int
    payload: bytes | None = None


@dataclass
class Transcript:
    """Every message exchanged, merged in (task_id, server, direction) order."""

    entries: list[TranscriptEntry] = field(default_factory=list)

    def record(self, direction: str, msg: WireMessage, nbytes: int, keep_payload: bool) -> None:
        self.entries.append(
            TranscriptEntry(direction, msg.server_index, msg.kind.name, msg.task_id, nbytes,
                            msg.payload if keep_payload else None)
        )

    def for_server(self, server_index: int) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.server_index == server_index]

    @property
    def message_count(self) -> int:
        return len(self.entries)

    @property
    def bytes_total(self) -> int:
        return sum(e.nbytes for e in self.entries)


@dataclass
class OperationCounts:
    messages: int = 0
    bytes: int = 0
    worker_flops: int = 0
    master_flops: int = 0


@dataclass
class ProtocolResult:
    """Decoded output of one run.

    ``value`` is the complex decoded quantity; ``real`` and ``residue`` are its
    real part and |imaginary part| (the residue is zero up to round-off for
    real-valued computations).
    """

    value: complex | np.ndarray
    real: float | np.ndarray
    residue: float | np.ndarray
    transcript: Transcript
    counts: OperationCounts
    error_bound: float | None = None


class Master:
    """Coordinates one set of N workers under fixed public parameters.

    Args:
        params: protocol parameters; ``params.D`` must match the degree of
            every task that is run.
        transport: message transport; defaults to N in-process workers.
        rng: noise generator; defaults to ``default_rng(params.seed)``.
        keep_payloads: store message payloads in the transcript.
    """

    def __init__(
        self,
        params: ProtocolParams,
        transport: Transport | None = None,
        rng: np.random.Generator | None = None,
        keep_payloads: bool = False,
    ):
        self.params = params
        self.transport = transport if transport is not None else InProcessTransport(params.N)
        if tuple(self.transport.server_indices) != tuple(range(1, params.N + 1)):
            raise InvalidArgumentError(
                f"transport serves {len(self.transport.server_indices)} workers, parameters need N={params.N}"
            )
        self.rng = rng if rng is not None else np.random.default_rng(params.seed)
        self.keep_payloads = keep_payloads
        self.transcript = Transcript()
        self.counts = OperationCounts()
        self.weights = decoder_weights(params)
        self.digest = params.digest()
        self._task_id = 0
        self._shapes: dict[str, tuple[int, ...]] = {}

    # -- messaging ---------------------------------------------------------

    def _exchange(self, kind: MessageKind, payloads: dict[int, bytes]) -> dict[int, WireMessage]:
        self._task_id += 1
        requests = {i: WireMessage(kind, self._task_id, i, p) for i, p in payloads.items()}
        blobs = {i: m.to_bytes() for i, m in requests.items()}
        raw = self.transport.exchange(blobs)

        # barrier reached: merge the transcript deterministically
        replies: dict[int, WireMessage] = {}
        failures: list[str] = []
        corrupt: list[str] = []
        for i in sorted(requests):
            self.transcript.record(TO_WORKER, requests[i], len(blobs[i]), self.keep_payloads)
            self.counts.messages += 1
            self.counts.bytes += len(blobs[i])
            answer = raw.get(i)
            if isinstance(answer, TransportError):
                corrupt.append(f"server {i}: {answer}")
                continue
            if isinstance(answer, BaseException) or answer is None:
                if kind != MessageKind.SHUTDOWN:
                    failures.append(f"server {i}: {answer or 'closed without reply'}")
                continue
            try:
                reply = WireMessage.from_bytes(answer)
            except TransportError as exc:
                corrupt.append(f"server {i}: {exc}")
                continue
            self.transcript.record(TO_MASTER, reply, len(answer), self.keep_payloads)
            self.counts.messages += 1
            self.counts.bytes += len(answer)
            if reply.kind == MessageKind.ERROR:
                text = reply.payload.decode(errors="replace")
                (corrupt if text.startswith("TransportError") else failures).append(f"server {i}: {text}")
            elif reply.kind != MessageKind.RESULT or reply.task_id != self._task_id:
                failures.append(f"server {i}: unexpected {reply.kind.name} for task {reply.task_id}")
            else:
                replies[i] = reply
        if corrupt:
            raise TransportError("corrupted messages: " + "; ".join(corrupt))
        if failures:
            raise ProtocolFailureError(
                f"{len(failures)} of {len(requests)} workers returned no usable result: " + "; ".join(failures),
                transcript=self.transcript,
            )
        return replies

    def send_shares(self, slot: str, shares: ShareSet) -> None:
        """Deliver each server's share of one secret under the name ``slot``."""
        if shares.params_digest != self.digest:
            raise InvalidArgumentError("shares were produced under different parameters")
        self._exchange(
            MessageKind.SHARES,
            {i: pack_shares(slot, shares.for_server(i)) for i in range(1, self.params.N + 1)},
        )
        self._shapes[slot] = shares.shape

    def share(self, slot: str, secret, noise: NoiseDraw | None = None) -> ShareSet:
        """Encode ``secret`` with fresh (or given) noise and send the shares."""
        secret = np.asarray(secret)
        if noise is None:
            noise = sample_truncated_noise(self.params, secret.shape, self.rng)
        shares = encode_secret(secret, self.params, noise)
        self.counts.master_flops += 8 * self.params.N * self.params.t * max(secret.size, 1)
        self.send_shares(slot, shares)
        return shares

    def run_task(self, task: TaskSpec) -> np.ndarray:
        """Dispatch ``task`` to all workers; return their results stacked in server order."""
        if task.degree != self.params.D:
            raise InvalidArgumentError(f"task degree {task.degree} differs from params.D={self.params.D}")
        replies = self._exchange(MessageKind.TASK, {i: task.to_bytes() for i in range(1, self.params.N + 1)})
        rows = []
        for i in range(1, self.params.N + 1):
            ss = shares_from_bytes(replies[i].payload, (i,))
            rows.append(ss.shares[0])
        self.counts.worker_flops += self.params.N * task_flops(task, self._shapes)
        return np.stack(rows)

    def decode(self, results: np.ndarray):
        out = decode_constant(results, self.weights)
        self.counts.master_flops += 8 * self.params.N * max(int(np.size(out)), 1)
        return out

    # -- high-level operations ----------------------------------------------

    def evaluate_polynomial(self, secret, coefficients: Sequence[complex], noise: NoiseDraw | None = None,
                            slot: str = "s") -> ProtocolResult:
        """Privately compute ``f(secret)`` element-wise for ascending ``coefficients``."""
        secret = np.asarray(secret)
        self.share(slot, secret, noise)
        results = self.run_task(polynomial_task(coefficients, self.digest, secret.shape, slot))
        value = self.decode(results)
        try:
            bound = accuracy_bound(abs(complex(coefficients[-1])), self.params).delta_f
        except HypothesisViolatedError:
            bound = None
        return self._result(value, bound)

    def share_data(self, X, noise: NoiseDraw | None = None, slot: str = "X") -> ShareSet:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise InvalidArgumentError(f"data must be a matrix, got shape {X.shape}")
        return self.share(slot, X, noise)

    def lr_product(self, w, noise: NoiseDraw | None = None, data_slot: str = "X") -> np.ndarray:
        """Decoded ``X^T X w`` (complex) for previously shared data ``X``."""
        if data_slot not in self._shapes:
            raise InvalidArgumentError(f"data slot {data_slot!r} has not been shared")
        w = np.asarray(w, dtype=float)
        d = self._shapes[data_slot][1]
        if w.shape != (d,):
            raise InvalidArgumentError(f"weights must have shape ({d},), got {w.shape}")
        self.share("w", w, noise)
        return self.decode(self.run_task(lr_task(self.digest, d, data_slot, "w")))

    def _result(self, value, bound) -> ProtocolResult:
        if isinstance(value, complex):
            real, residue = value.real, abs(value.imag)
        else:
            real, residue = value.real.copy(), np.abs(value.imag)
        counts = OperationCounts(**vars(self.counts))
        return ProtocolResult(value, real, residue, self.transcript, counts, bound)

    def shutdown(self) -> None:
        try:
            self._exchange(MessageKind.SHUTDOWN, {i: b"" for i in range(1, self.params.N + 1)})
        except (ProtocolFailureError, TransportError) as exc:
            warnings.warn(f"shutdown incomplete: {exc}", RuntimeWarning, stacklevel=2)


LR_PRODUCT = "lr-product"


def run_protocol(
    secret,
    task,
    params: ProtocolParams,
    transport: Transport | None = None,
    rng: np.random.Generator | None = None,
    noise=None,
    keep_payloads: bool = False,
) -> ProtocolResult:
    """Share, compute and decode in one call.

    ``task`` is either ascending polynomial coefficients (degree ``params.D``)
    applied to ``secret``, or ``"lr-product"`` with ``secret = (X, w)``, which
    returns ``X^T X w`` (then ``params.D`` must be 3). For the latter, ``noise``
    may be a pair of NoiseDraw for X and w.

    Raises:
        ProtocolFailureError: a worker did not return a result.
        TransportError: a message failed its checksum.
    """
    own = transport is None
    master = Master(params, transport, rng, keep_payloads)
    try:
        if isinstance(task, str):
            if task != LR_PRODUCT:
                raise InvalidArgumentError(f"unknown task {task!r}")
            X, w = secret
            nx, nw = noise if noise is not None else (None, None)
            master.share_data(X, nx)
            value = master.lr_product(w, nw)
            result = master._result(value, None)
        else:
            result = master.evaluate_polynomial(secret, list(task), noise)
        master.shutdown()
        result.counts = OperationCounts(**vars(master.counts))
        return result
    finally:
        if own:
            master.transport.close()
