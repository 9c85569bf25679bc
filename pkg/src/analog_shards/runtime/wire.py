"""Framed master <-> worker messages.

Message layout (big-endian header)::

    b"AMSG" | version u16 | kind u8 | task_id u64 | server_index u32
    | payload length u32 | payload | CRC32(payload) u32

On a stream every message is preceded by its total length as a big-endian u32.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import BinaryIO, Sequence

from ..errors import FormatError, TransportError
from ..shareio import shares_from_bytes, shares_to_bytes
from ..sharing import ShareSet, _as_shape

MAGIC = b"AMSG"
VERSION = 1
_HEADER = struct.Struct(">4sHBQII")
_CRC = struct.Struct(">I")
_LEN = struct.Struct(">I")


class MessageKind(IntEnum):
    TASK = 1
    SHARES = 2
    RESULT = 3
    ERROR = 4
    SHUTDOWN = 5


@dataclass(frozen=True)
class WireMessage:
    kind: MessageKind
    task_id: int
    server_index: int
    payload: bytes = b""

    @property
    def checksum(self) -> int:
        return zlib.crc32(self.payload) & 0xFFFFFFFF

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, int(self.kind), self.task_id, self.server_index, len(self.payload))
        return head + self.payload + _CRC.pack(self.checksum)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "WireMessage":
        if len(blob) < _HEADER.size + _CRC.size:
            raise TransportError(f"message too short: {len(blob)} bytes")
        magic, version, kind, task_id, server_index, length = _HEADER.unpack_from(blob, 0)
        if magic != MAGIC:
            raise TransportError(f"bad message magic {magic!r}")
        if version != VERSION:
            raise TransportError(f"unsupported message version {version}")
        if len(blob) != _HEADER.size + length + _CRC.size:
            raise TransportError(
                f"message length mismatch: header says {length} payload bytes, frame holds "
                f"{len(blob) - _HEADER.size - _CRC.size}"
            )
        payload = bytes(blob[_HEADER.size : _HEADER.size + length])
        (crc,) = _CRC.unpack_from(blob, _HEADER.size + length)
        if crc != zlib.crc32(payload) & 0xFFFFFFFF:
            raise TransportError(f"CRC mismatch on message for server {server_index}, task {task_id}")
        try:
            kind = MessageKind(kind)
        except ValueError:
            raise TransportError(f"unknown message kind {kind}") from None
        return cls(kind, task_id, server_index, payload)


def write_frame(stream: BinaryIO, blob: bytes) -> None:
    stream.write(_LEN.pack(len(blob)))
    stream.write(blob)
    stream.flush()


def _read_exact(stream: BinaryIO, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO) -> bytes | None:
    """Next frame body, or None on a clean end of stream."""
    head = _read_exact(stream, _LEN.size)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    body = _read_exact(stream, length)
    if body is None:
        raise TransportError(f"stream ended inside a {length}-byte frame")
    return body


# ---------------------------------------------------------------------------
# payloads


def pack_shares(slot: str, shares: ShareSet) -> bytes:
    name = slot.encode()
    if len(name) > 255:
        raise FormatError("slot name too long")
    return bytes([len(name)]) + name + shares_to_bytes(shares)


def unpack_shares(payload: bytes, server_index: int) -> tuple[str, ShareSet]:
    if not payload:
        raise FormatError("empty shares payload")
    n = payload[0]
    slot = payload[1 : 1 + n].decode()
    return slot, shares_from_bytes(payload[1 + n :], (server_index,))


EVAL_POLYNOMIAL = "eval_polynomial"
LR_ITERATION_PRODUCT = "lr_iteration_product"


@dataclass(frozen=True)
class TaskSpec:
    """What a worker computes on the shares it holds.

    ``eval_polynomial`` applies ``sum_k coefficients[k] y**k`` element-wise to
    slot ``inputs[0]``; ``lr_iteration_product`` computes ``X^T (X w)`` for
    slots ``inputs = (X, w)``.
    """

    kind: str
    params_digest: bytes
    result_shape: tuple[int, ...]
    coefficients: tuple[complex, ...] = ()
    inputs: tuple[str, ...] = field(default=("s",))

    @property
    def degree(self) -> int:
        if self.kind == LR_ITERATION_PRODUCT:
            return 3
        return len(self.coefficients) - 1

    def to_bytes(self) -> bytes:
        doc = {
            "kind": self.kind,
            "params_digest": self.params_digest.hex(),
            "result_shape": list(self.result_shape),
            "coefficients": [[complex(c).real, complex(c).imag] for c in self.coefficients],
            "inputs": list(self.inputs),
        }
        return json.dumps(doc).encode()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "TaskSpec":
        try:
            doc = json.loads(payload.decode())
            return cls(
                kind=doc["kind"],
                params_digest=bytes.fromhex(doc["params_digest"]),
                result_shape=tuple(int(x) for x in doc["result_shape"]),
                coefficients=tuple(complex(re, im) for re, im in doc["coefficients"]),
                inputs=tuple(doc["inputs"]),
            )
        except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"malformed task payload: {exc}") from exc


def polynomial_task(coefficients: Sequence[complex], digest: bytes, shape, slot: str = "s") -> TaskSpec:
    return TaskSpec(EVAL_POLYNOMIAL, digest, _as_shape(shape), tuple(coefficients), (slot,))


def lr_task(digest: bytes, d: int, data_slot: str = "X", weight_slot: str = "w") -> TaskSpec:
    return TaskSpec(LR_ITERATION_PRODUCT, digest, (d,), (), (data_slot, weight_slot))
