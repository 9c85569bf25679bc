"""Analog (complex-valued) Shamir-style sharing.

A secret ``s`` is hidden in the constant term of

    p(x) = s + n_1 x + ... + n_t x^t

whose coefficients are circular complex Gaussian noise, and server ``i``
receives ``p(omega_i)``.  After every server applies a degree-D polynomial
``f`` to its share, ``f(s)`` is the constant term of ``f(p(x))`` and is
recovered with one fixed linear combination of the returned values.
"""
from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    InsufficientServersError,
    InvalidArgumentError,
    InvalidParameterError,
    SamplingError,
    SecretRangeWarning,
    SingularityError,
)

MAX_REJECTION_ROUNDS = 10**6

# exact values of exp(2*pi*j*k/4); avoids 1e-16 residue on the axes
_QUARTER_TURNS = (1 + 0j, 1j, -1 + 0j, -1j)


def _unit_root(k: int, n: int) -> complex:
    k %= n
    if (4 * k) % n == 0:
        return _QUARTER_TURNS[(4 * k) // n]
    return complex(np.exp(2j * np.pi * k / n))


def roots_of_unity(N: int) -> np.ndarray:
    """Evaluation points ``exp(2*pi*j*i/N)`` for server indices ``i = 1..N``.

    >>> roots_of_unity(4)
    array([ 0.+1.j, -1.+0.j, -0.-1.j,  1.+0.j])
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise InvalidParameterError(f"N must be a positive integer, got {N!r}")
    return np.array([_unit_root(i, N) for i in range(1, N + 1)], dtype=complex)


@dataclass(frozen=True)
class ProtocolParams:
    """Public parameters of one sharing scheme.

    Attributes:
        N: number of servers.
        t: maximum number of colluding servers (degree of the masking polynomial).
        D: degree of the polynomial evaluated on the shares.
        sigma_n: noise standard deviation, in units of the secret.
        alpha: truncation multiplier; noise coefficients satisfy |n_j| <= alpha*sigma_n/sqrt(t).
        r: bound on |secret|.
        omegas: evaluation points; defaults to the N-th roots of unity.
        seed: seed for the noise generator of convenience helpers.
    """

    N: int
    t: int
    D: int
    sigma_n: float
    alpha: float = 10.0
    r: float = 1.0
    omegas: tuple[complex, ...] | None = None
    seed: int = 0
    default_points: bool = field(init=False, repr=False, compare=False, default=True)

    def __post_init__(self):
        for name in ("N", "t", "D", "seed"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
        if self.N < 2:
            raise InvalidParameterError(f"N must be >= 2, got {self.N}")
        if self.t < 1:
            raise InvalidParameterError(f"t must be >= 1, got {self.t}")
        if self.D < 1:
            raise InvalidParameterError(f"D must be >= 1, got {self.D}")
        if not (self.sigma_n > 0 and math.isfinite(self.sigma_n)):
            raise InvalidParameterError(f"sigma_n must be positive and finite, got {self.sigma_n}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be positive and finite, got {self.alpha}")
        if not self.r >= 0:
            raise InvalidParameterError(f"r must be >= 0, got {self.r}")
        if self.N < self.D * self.t + 1:
            raise InsufficientServersError(
                f"N={self.N} servers cannot recover a degree-{self.D * self.t} polynomial "
                f"(need N >= D*t + 1 = {self.D * self.t + 1})"
            )
        if self.omegas is None:
            object.__setattr__(self, "omegas", tuple(roots_of_unity(self.N)))
            object.__setattr__(self, "default_points", True)
        else:
            points = tuple(complex(w) for w in self.omegas)
            if len(points) != self.N:
                raise InvalidParameterError(f"expected {self.N} evaluation points, got {len(points)}")
            object.__setattr__(self, "omegas", points)
            object.__setattr__(self, "default_points", points == tuple(roots_of_unity(self.N)))

    @property
    def m(self) -> float:
        """Truncation threshold ``alpha * sigma_n / sqrt(t)``."""
        return self.alpha * self.sigma_n / math.sqrt(self.t)

    @property
    def d(self) -> int:
        """Degree of f(p(x))."""
        return self.D * self.t

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.omegas, dtype=complex)

    def replace(self, **changes) -> "ProtocolParams":
        """Copy with some fields changed; defaulted points follow a new N."""
        if self.default_points and "omegas" not in changes:
            changes["omegas"] = None
        return dataclasses.replace(self, **changes)

    def public_dict(self) -> dict:
        return {
            "N": int(self.N),
            "t": int(self.t),
            "D": int(self.D),
            "sigma_n": float(self.sigma_n),
            "alpha": float(self.alpha),
            "r": float(self.r),
            "omegas": [[w.real, w.imag] for w in self.omegas],
        }

    def digest(self) -> bytes:
        """SHA-256 of the public parameters (the seed is not public and is excluded)."""
        blob = json.dumps(self.public_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).digest()


def vandermonde(params: ProtocolParams, degree: int) -> np.ndarray:
    """N x (degree+1) matrix with entries ``omega_i ** j``, j = 0..degree."""
    if params.default_points:
        N = params.N
        return np.array(
            [[_unit_root(i * j, N) for j in range(degree + 1)] for i in range(1, N + 1)],
            dtype=complex,
        )
    return np.vander(params.points, degree + 1, increasing=True)


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseDraw:
    """Masking coefficients n_1..n_t, one stack per secret element.

    ``coeffs`` has shape ``(t, *secret_shape)``.
    """

    coeffs: np.ndarray

    @property
    def t(self) -> int:
        return self.coeffs.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @classmethod
    def zeros(cls, t: int, shape: int | Sequence[int] = ()) -> "NoiseDraw":
        """All-zero noise. Test hook: shares then equal the secret."""
        return cls(np.zeros((t, *_as_shape(shape)), dtype=complex))


def _as_shape(shape) -> tuple[int, ...]:
    if shape is None:
        return ()
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def sample_truncated_noise(
    params: ProtocolParams,
    shape: int | Sequence[int] = (),
    rng: np.random.Generator | None = None,
    max_rounds: int = MAX_REJECTION_ROUNDS,
) -> NoiseDraw:
    """Draw t truncated circular complex Gaussian coefficients per element.

    Each coefficient is CN(0, sigma_n^2 / t) conditioned on |n| <= m, produced by
    redrawing out-of-range entries (rejection keeps circular symmetry, clipping
    would not).

    Args:
        params: scheme parameters (sigma_n, alpha, t).
        shape: shape of the secret being masked; an int means a vector.
        rng: numpy Generator. Defaults to ``default_rng(params.seed)``.
        max_rounds: redraw rounds before giving up.

    Raises:
        SamplingError: some entry was rejected ``max_rounds`` times in a row.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    full = (params.t, *_as_shape(shape))
    scale = params.sigma_n / math.sqrt(2 * params.t)
    m = params.m
    z = scale * (rng.standard_normal(full) + 1j * rng.standard_normal(full))
    bad = np.abs(z) > m
    rounds = 1
    while bad.any():
        if rounds >= max_rounds:
            raise SamplingError(f"rejection sampling did not terminate after {max_rounds} rounds")
        k = int(bad.sum())
        z[bad] = scale * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
        bad = np.abs(z) > m
        rounds += 1
    return NoiseDraw(z)


# ---------------------------------------------------------------------------
# shares

_KINDS = {0: "scalar", 1: "vector", 2: "matrix"}


@dataclass(frozen=True)
class ShareSet:
    """Shares of one secret (scalar, vector or matrix), one array per server.

    ``shares[k]`` belongs to server ``server_indices[k]``; indices are 1-based.
    """

    shares: np.ndarray
    params_digest: bytes
    server_indices: tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.shares, dtype=complex)
        if arr.ndim < 1 or arr.ndim > 3:
            raise InvalidArgumentError(f"shares must have 1 to 3 dimensions, got {arr.ndim}")
        object.__setattr__(self, "shares", arr)
        if not self.server_indices:
            object.__setattr__(self, "server_indices", tuple(range(1, arr.shape[0] + 1)))
        elif len(self.server_indices) != arr.shape[0]:
            raise InvalidArgumentError("one server index per share array is required")
        if len(self.params_digest) != 32:
            raise InvalidArgumentError("params_digest must be 32 bytes")

    @property
    def n_servers(self) -> int:
        return self.shares.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.shares.shape[1:]

    @property
    def kind(self) -> str:
        return _KINDS[len(self.shape)]

    def share(self, server_index: int) -> np.ndarray:
        """The share held by ``server_index`` (1-based)."""
        return self.shares[self.server_indices.index(server_index)]

    def for_server(self, server_index: int) -> "ShareSet":
        """A one-server ShareSet, the unit that travels to a worker."""
        k = self.server_indices.index(server_index)
        return ShareSet(self.shares[k : k + 1], self.params_digest, (server_index,))


def encode_secret(s, params: ProtocolParams, noise: NoiseDraw) -> ShareSet:
    """Evaluate ``s + sum_j omega_i^j n_j`` for every server i, element-wise.

    Secrets above ``params.r`` in magnitude only trigger a SecretRangeWarning:
    the arithmetic still works, the privacy and accuracy bounds do not.
    """
    s = np.asarray(s)
    if s.ndim > 2:
        raise InvalidArgumentError(f"secrets must be scalar, vector or matrix; got ndim={s.ndim}")
    coeffs = np.asarray(noise.coeffs)
    if coeffs.shape != (params.t, *s.shape):
        raise InvalidArgumentError(
            f"noise shape {coeffs.shape} does not match (t, *secret shape) = {(params.t, *s.shape)}"
        )
    if s.size and np.max(np.abs(s)) > params.r:
        warnings.warn(
            f"secret magnitude {np.max(np.abs(s)):.6g} exceeds r={params.r}; bounds are void",
            SecretRangeWarning,
            stacklevel=2,
        )
    powers = vandermonde(params, params.t)[:, 1:]  # N x t
    masked = np.tensordot(powers, coeffs, axes=(1, 0))
    return ShareSet(s.astype(complex)[None, ...] + masked, params.digest())


def share_secret(s, params: ProtocolParams, rng: np.random.Generator | None = None) -> ShareSet:
    """Sample fresh truncated noise and encode ``s``."""
    s = np.asarray(s)
    return encode_secret(s, params, sample_truncated_noise(params, s.shape, rng))


# ---------------------------------------------------------------------------
# decoding


@dataclass(frozen=True)
class DecoderWeights:
    """First row of the (pseudo-)inverse of the N x (d+1) Vandermonde matrix."""

    b_tilde: np.ndarray

    @property
    def N(self) -> int:
        return self.b_tilde.shape[0]


def _check_distinct(points: np.ndarray, tol: float = 1e-12) -> None:
    diffs = np.abs(points[:, None] - points[None, :])
    np.fill_diagonal(diffs, np.inf)
    if diffs.min() <= tol:
        raise SingularityError("evaluation points must be pairwise distinct")


@functools.lru_cache(maxsize=128)
def _weights_cached(params: ProtocolParams, d: int) -> np.ndarray:
    if params.N < d + 1:
        raise InsufficientServersError(f"N={params.N} < d+1={d + 1}")
    points = params.points
    _check_distinct(points)
    if params.default_points:
        # columns of the root-of-unity Vandermonde are orthogonal with norm^2 = N,
        # so the first row of the pseudo-inverse is exactly 1/N everywhere
        b = np.full(params.N, 1.0 / params.N, dtype=complex)
    else:
        B = vandermonde(params, d)
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] <= sv[0] * B.shape[0] * np.finfo(float).eps:
            raise SingularityError("Vandermonde matrix of the evaluation points is rank deficient")
        b = np.linalg.pinv(B)[0]
    b.setflags(write=False)
    return b


def decoder_weights(params: ProtocolParams, d: int | None = None) -> DecoderWeights:
    """Decoder weights for recovering the constant term of a degree-d polynomial.

    ``d`` defaults to ``params.d = D*t``. The result is cached per parameter set.

    Raises:
        InsufficientServersError: N < d + 1.
        SingularityError: repeated or numerically dependent evaluation points.
    """
    return DecoderWeights(_weights_cached(params, params.d if d is None else int(d)))


def _pairwise_sum(terms: np.ndarray) -> np.ndarray:
    # fixed reduction tree over the server axis: deterministic, and exact when
    # all terms are equal and N is a power of two
    while terms.shape[0] > 1:
        n = terms.shape[0]
        half = n // 2
        head = terms[:half] + terms[half : 2 * half]
        terms = np.concatenate([head, terms[2 * half :]]) if n % 2 else head
    return terms[0]


def decode_constant(results, weights: DecoderWeights):
    """Recover f(s) as ``b_tilde . z`` from the N results in server order."""
    z = np.asarray(results, dtype=complex)
    if z.ndim == 0 or z.shape[0] != weights.N:
        raise InvalidArgumentError(
            f"expected {weights.N} results (one per server), got {0 if z.ndim == 0 else z.shape[0]}"
        )
    b = weights.b_tilde.reshape((weights.N,) + (1,) * (z.ndim - 1))
    out = _pairwise_sum(b * z)
    return complex(out) if out.ndim == 0 else out


class DecodedValue(NamedTuple):
    value: float | np.ndarray
    residue: float | np.ndarray


def decode_real(results, weights: DecoderWeights) -> DecodedValue:
    """Decode a real-valued computation: real part plus |imaginary| residue."""
    out = decode_constant(results, weights)
    if isinstance(out, complex):
        return DecodedValue(out.real, abs(out.imag))
    return DecodedValue(out.real.copy(), np.abs(out.imag))


def polyval(coefficients: Sequence[complex], x):
    """Horner evaluation; ``coefficients[k]`` multiplies ``x**k``."""
    x = np.asarray(x)
    acc = np.zeros_like(x, dtype=complex) + coefficients[-1]
    for c in reversed(coefficients[:-1]):
        acc = acc * x + c
    return acc
