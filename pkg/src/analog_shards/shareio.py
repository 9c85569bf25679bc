"""Binary and JSON encodings of :class:`ShareSet`.

Binary layout (all header integers big-endian)::

    b"ASHR" | version u16 | shape tag u8 | dims u64 * ndim | N u32 | digest[32]
    | N arrays of interleaved little-endian f64 (re, im), C order

Shape tags: 0 scalar, 1 vector, 2 matrix.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .sharing import ShareSet

MAGIC = b"ASHR"
VERSION = 1
_HEAD = struct.Struct(">4sHB")
_WIRE_COMPLEX = np.dtype("<c16")
_TAG_NAMES = {0: "scalar", 1: "vector", 2: "matrix"}
_NAME_TAGS = {v: k for k, v in _TAG_NAMES.items()}


def shares_to_bytes(ss: ShareSet) -> bytes:
    shape = ss.shape
    parts = [
        _HEAD.pack(MAGIC, VERSION, len(shape)),
        struct.pack(f">{len(shape)}Q", *shape),
        struct.pack(">I", ss.n_servers),
        ss.params_digest,
        np.ascontiguousarray(ss.shares, dtype=_WIRE_COMPLEX).tobytes(),
    ]
    return b"".join(parts)


def shares_from_bytes(blob: bytes, server_indices: tuple[int, ...] = ()) -> ShareSet:
    """Parse the binary layout. Server indices are not on the wire; pass them if known."""
    blob = bytes(blob)
    if len(blob) < _HEAD.size:
        raise FormatError(f"share blob too short for header: {len(blob)} bytes")
    magic, version, tag = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported share format version {version}")
    if tag not in _TAG_NAMES:
        raise FormatError(f"unknown shape tag {tag}")
    pos = _HEAD.size
    need = pos + 8 * tag + 4 + 32
    if len(blob) < need:
        raise FormatError(f"truncated header: need {need} bytes, got {len(blob)}")
    dims = struct.unpack_from(f">{tag}Q", blob, pos)
    pos += 8 * tag
    (n,) = struct.unpack_from(">I", blob, pos)
    pos += 4
    digest = blob[pos : pos + 32]
    pos += 32
    count = n * int(np.prod(dims, dtype=np.int64))
    expected = pos + count * _WIRE_COMPLEX.itemsize
    if len(blob) != expected:
        raise FormatError(f"share payload length mismatch: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype=_WIRE_COMPLEX, count=count, offset=pos)
    shares = data.astype(complex).reshape((n, *dims))
    return ShareSet(shares, digest, tuple(server_indices))


def shares_to_json(ss: ShareSet) -> str:
    doc = {
        "magic": MAGIC.decode(),
        "version": VERSION,
        "shape": ss.kind,
        "dims": list(ss.shape),
        "N": ss.n_servers,
        "params_digest": ss.params_digest.hex(),
        "server_indices": list(ss.server_indices),
        "shares": [
            [[float(z.real), float(z.imag)] for z in arr.reshape(-1)] for arr in ss.shares
        ],
    }
    return json.dumps(doc)


def shares_from_json(text: str) -> ShareSet:
    try:
        doc = json.loads(text)
        if doc["magic"] != MAGIC.decode():
            raise FormatError(f"bad magic {doc['magic']!r}")
        if doc["version"] != VERSION:
            raise FormatError(f"unsupported share format version {doc['version']}")
        dims = tuple(int(x) for x in doc["dims"])
        if doc["shape"] != _TAG_NAMES.get(len(dims)):
            raise FormatError(f"shape {doc['shape']!r} inconsistent with dims {dims}")
        rows = [np.array([complex(re, im) for re, im in arr]).reshape(dims) for arr in doc["shares"]]
        if len(rows) != int(doc["N"]):
            raise FormatError(f"N={doc['N']} but {len(rows)} share arrays present")
        digest = bytes.fromhex(doc["params_digest"])
        return ShareSet(np.stack(rows), digest, tuple(doc.get("server_indices", ())))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed share JSON: {exc}") from exc
