"""Finite-field fixed-point baseline: Shamir sharing over Z_p with silent wrap-around.

Features and weights are quantized to ``round(x * 2^l)`` and embedded in Z_p.
Workers evaluate the label-free part of the degree-1 gradient,
``h = X^T (X w + 2 * 1)`` (four times ``X^T g(X w)`` with ``g(z) = 1/2 + z/4``),
modulo p on their shares; the master decodes at 0, takes the centered
representative, rescales by ``2^(3l)`` and subtracts the label part ``2 X^T l``.
Values beyond ``+-(p-1)/2`` alias silently, which is the failure mode this
baseline exists to show.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError
from ..runtime.master import OperationCounts
from .mnist import Dataset
from .training import (
    IterationRecord,
    ModelState,
    TrainingConfig,
    evaluate,
    logistic_loss,
)

MERSENNE_61 = 2**61 - 1
_MAX_PRIME_BITS = 62  # modular doubling must stay inside uint64
_FLOAT_BITS = 53


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FixedPointConfig:
    """Field and quantization parameters; the representable range is +-(p-1)/2."""

    field_prime: int = MERSENNE_61
    frac_bits: int = 24
    N: int = 4
    t: int = 1

    def __post_init__(self):
        p = self.field_prime
        if not isinstance(p, int) or not is_prime(p):
            raise InvalidParameterError(f"field_prime must be prime, got {p!r}")
        if p.bit_length() > _MAX_PRIME_BITS:
            raise InvalidParameterError(f"field_prime must be below 2^{_MAX_PRIME_BITS}")
        if self.frac_bits < 0:
            raise InvalidParameterError("frac_bits must be >= 0")
        if self.t < 1 or self.N < 3 * self.t + 1:
            raise InvalidParameterError(f"need t >= 1 and N >= 3t+1, got N={self.N}, t={self.t}")
        if self.N >= p:
            raise InvalidParameterError("N must be smaller than the field prime")

    @property
    def half_range(self) -> int:
        return (self.field_prime - 1) // 2

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits


# ---------------------------------------------------------------------------
# arithmetic mod p on uint64 arrays


def addmod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    s = a + b
    return np.where(s >= np.uint64(p), s - np.uint64(p), s)


def mulmod_scalar(a: np.ndarray, scalar: int, p: int) -> np.ndarray:
    """``a * scalar mod p`` by double-and-add; exact for p < 2^62."""
    scalar %= p
    out = np.zeros_like(a, dtype=np.uint64)
    for bit in bin(scalar)[2:]:
        out = addmod(out, out, p)
        if bit == "1":
            out = addmod(out, a, p)
    return out


def to_field(values, p: int) -> np.ndarray:
    """Embed integers (any sign) into [0, p)."""
    return np.mod(np.asarray(values, dtype=np.int64), p).astype(np.uint64)


def centered(values: np.ndarray, p: int) -> np.ndarray:
    """Representative in [-(p-1)/2, (p-1)/2] as int64."""
    v = values.astype(np.int64)
    return np.where(v > (p - 1) // 2, v - p, v)


class LimbMatrix:
    """Matrix over Z_p split into b-bit limbs for exact float64 products.

    Each limb product sums ``n`` terms below ``2^(2b)``, so ``2b + log2(n) <= 53``
    keeps it exact.
    """

    def __init__(self, A: np.ndarray, p: int):
        self.p = p
        self.shape = A.shape
        n = max(A.shape)
        self.bits = (_FLOAT_BITS - math.ceil(math.log2(n + 1))) // 2
        self.n_limbs = math.ceil(p.bit_length() / self.bits)
        mask = np.uint64((1 << self.bits) - 1)
        self.limbs = [
            np.ascontiguousarray(((A >> np.uint64(self.bits * j)) & mask).astype(float))
            for j in range(self.n_limbs)
        ]

    def _split(self, v: np.ndarray) -> list[np.ndarray]:
        mask = np.uint64((1 << self.bits) - 1)
        return [((v >> np.uint64(self.bits * j)) & mask).astype(float) for j in range(self.n_limbs)]

    def _combine(self, products) -> np.ndarray:
        p = self.p
        by_shift: dict[int, np.ndarray] = {}
        for shift, prod in products:
            part = np.mod(prod.astype(np.uint64), np.uint64(p))
            by_shift[shift] = addmod(by_shift[shift], part, p) if shift in by_shift else part
        out = None
        for shift, part in by_shift.items():
            term = mulmod_scalar(part, pow(2, self.bits * shift, p), p)
            out = term if out is None else addmod(out, term, p)
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        vl = self._split(v)
        return self._combine((i + j, Ai @ vj) for i, Ai in enumerate(self.limbs) for j, vj in enumerate(vl))

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        vl = self._split(v)
        return self._combine((i + j, Ai.T @ vj) for i, Ai in enumerate(self.limbs) for j, vj in enumerate(vl))

    @property
    def flops_per_matvec(self) -> int:
        return 2 * self.n_limbs**2 * self.shape[0] * self.shape[1]


# ---------------------------------------------------------------------------
# Shamir over Z_p


def shamir_share(secret: np.ndarray, fxp: FixedPointConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Shares at points 1..N of ``secret + sum_j R_j x^j`` with uniform R_j in Z_p."""
    p = fxp.field_prime
    coeffs = [rng.integers(0, p, size=secret.shape, dtype=np.uint64) for _ in range(fxp.t)]
    shares = []
    for x in range(1, fxp.N + 1):
        acc = np.zeros_like(secret)
        for R in reversed(coeffs):  # Horner: ((R_t x + R_{t-1}) x + ...) x
            acc = mulmod_scalar(addmod(acc, R, p), x, p)
        shares.append(addmod(acc, secret, p))
    return shares


def lagrange_at_zero(points, p: int) -> list[int]:
    weights = []
    for i, xi in enumerate(points):
        num, den = 1, 1
        for j, xj in enumerate(points):
            if j != i:
                num = num * xj % p
                den = den * (xj - xi) % p
        weights.append(num * pow(den, -1, p) % p)
    return weights


def shamir_decode(results: list[np.ndarray], degree: int, p: int) -> np.ndarray:
    """Value at 0 of the degree-``degree`` polynomial through the first degree+1 results."""
    points = list(range(1, degree + 2))
    out = None
    for lam, z in zip(lagrange_at_zero(points, p), results[: degree + 1]):
        term = mulmod_scalar(z, lam, p)
        out = term if out is None else addmod(out, term, p)
    return out


def quantize(x, frac_bits: int) -> np.ndarray:
    return np.rint(np.asarray(x, dtype=float) * float(1 << frac_bits)).astype(np.int64)


# ---------------------------------------------------------------------------
# training


def certified_magnitude(Xq: np.ndarray, wq: np.ndarray, offset: int) -> int:
    """Largest ``(|Xq|^T (|Xq| |wq| + offset))_j``.

    No wrap-around can occur while it is at most (p-1)/2.
    """
    A = np.abs(Xq).astype(object)
    return int(np.max(A.T.dot(A.dot(np.abs(wq).astype(object)) + offset)))


def _step(w, h, label_part, beta, m):
    # Algorithm-2 bracket u/2 + X^T(1 - 2l) rewritten as h/2 - 2 X^T l
    return w - (beta / (2.0 * m)) * (0.5 * h - label_part)


def train_fixed_point(
    data: Dataset,
    config: TrainingConfig,
    fxp: FixedPointConfig = FixedPointConfig(),
    test: Dataset | None = None,
    rng: np.random.Generator | None = None,
    certify: bool = False,
) -> ModelState:
    """Fixed-point analogue of the analog trainer; overflow aliases silently.

    With ``certify`` each record notes ``certified-overflow-risk`` when the
    per-iteration magnitude bound exceeds (p-1)/2 (diagnostic only).
    """
    p, ell = fxp.field_prime, fxp.frac_bits
    rng = rng if rng is not None else np.random.default_rng(0)
    X, labels = data.X, data.labels
    m, d = X.shape
    Xq = quantize(X, ell)
    worker_mats = [LimbMatrix(s, p) for s in shamir_share(to_field(Xq, p), fxp, rng)]
    label_part = 2.0 * (X.T @ labels)
    offset = 2 ** (2 * ell + 1)  # the constant 2 at scale 2^(2l)
    ones_offset = np.full(m, offset % p, dtype=np.uint64)
    rescale = float(2 ** (3 * ell))
    counts = OperationCounts()
    counts.messages += 2 * fxp.N
    counts.bytes += fxp.N * 8 * m * d

    w = np.zeros(d)
    state = ModelState(w, diagnostics={"half_range": fxp.half_range, "max_certified": 0})
    for it in range(1, config.k + 1):
        wq = quantize(w, ell)
        w_shares = shamir_share(to_field(wq, p), fxp, rng)
        results = [A.rmatvec(addmod(A.matvec(ws), ones_offset, p)) for A, ws in zip(worker_mats, w_shares)]
        h = centered(shamir_decode(results, 3 * fxp.t, p), p).astype(float) / rescale
        notes = ()
        if certify:
            bound = certified_magnitude(Xq, wq, offset)
            state.diagnostics["max_certified"] = max(state.diagnostics["max_certified"], bound)
            if bound > fxp.half_range:
                notes = ("certified-overflow-risk",)
        w = _step(w, h, label_part, config.beta, m)
        acc = evaluate(w, test) if test is not None else math.nan
        state.history.append(IterationRecord(it, w.copy(), logistic_loss(X, labels, w), acc, notes=notes))
        counts.messages += 4 * fxp.N
        counts.bytes += fxp.N * 8 * 2 * d
        counts.worker_flops += sum(2 * A.flops_per_matvec for A in worker_mats)
    state.w, state.iteration, state.counts = w, config.k, counts
    return state


def overflow_threshold(population: Dataset, config: TrainingConfig, fxp: FixedPointConfig) -> float:
    """Dataset size above which the decoded worker output exceeds the field's centered range.

    Every entry of ``h = X^T (X w + 2)`` is a sum over samples, so its magnitude
    grows linearly with the sample count at a per-sample rate
    ``rho = max_j |h_j| / m``. ``rho`` is taken as its largest value along the
    plaintext degree-1 trajectory on ``population``; the threshold is
    ``(p-1)/2 / (2^(3l) rho)``.
    """
    X, labels = population.X, population.labels
    m = population.m
    label_part = 2.0 * (X.T @ labels)
    w = np.zeros(population.d)
    rho = 0.0
    for _ in range(max(config.k, 1)):
        h = X.T @ (X @ w + 2.0)
        rho = max(rho, float(np.max(np.abs(h))) / m)
        w = _step(w, h, label_part, config.beta, m)
    if rho == 0.0:
        return math.inf
    return fxp.half_range / (2.0 ** (3 * fxp.frac_bits) * rho)
