"""Floating-point accuracy of analog sharing and the privacy/accuracy trade-off."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import AnalogShardsError, HypothesisViolatedError, InvalidParameterError, SingularityError
from .privacy import ds_bound_collusion
from .sharing import (
    NoiseDraw,
    ProtocolParams,
    decode_constant,
    decoder_weights,
    encode_secret,
    polyval,
    sample_truncated_noise,
    vandermonde,
)


@dataclass(frozen=True)
class FloatModel:
    """Floating-point format: ``v`` mantissa bits, ``q`` exponent bits (reporting only)."""

    v: int = 52
    q: int = 11

    def __post_init__(self):
        if self.v < 1:
            raise InvalidParameterError(f"precision bits v must be >= 1, got {self.v}")

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** -(self.v + 1)


DOUBLE = FloatModel()


@dataclass(frozen=True)
class AccuracyBound:
    delta_f: float
    kappa: float
    a_D: float
    t: int
    m: float
    D: int
    v: int

    @property
    def log10(self) -> float:
        return math.log10(self.delta_f) if self.delta_f > 0 else -math.inf


def condition_number(matrix) -> float:
    """Ratio of the extreme singular values of a full-column-rank matrix."""
    a = np.atleast_2d(np.asarray(matrix))
    sv = np.linalg.svd(a, compute_uv=False)
    if sv.size < a.shape[1] or sv[-1] <= sv[0] * max(a.shape) * np.finfo(float).eps:
        raise SingularityError("matrix is rank deficient; condition number is unbounded")
    return float(sv[0] / sv[-1])


def encoding_condition_number(params: ProtocolParams) -> float:
    """Condition number of the N x (t+1) encoding matrix ``[omega_i^j]``."""
    return condition_number(vandermonde(params, params.t))


def accuracy_bound(
    a_D: float,
    params: ProtocolParams,
    fm: FloatModel = DOUBLE,
    kappa: float | None = None,
) -> AccuracyBound:
    """Worst-case decoding error ``|a_D| sqrt(t+1) m^D kappa 2^-(v+1)``.

    ``kappa`` defaults to 1 for roots of unity and is computed from the points
    otherwise.

    Raises:
        HypothesisViolatedError: when r > m, where the bound does not apply.
    """
    m = params.m
    if params.r > m:
        raise HypothesisViolatedError(f"bound requires r <= m, got r={params.r} > m={m}")
    if kappa is None:
        kappa = 1.0 if params.default_points else encoding_condition_number(params)
    delta = abs(a_D) * math.sqrt(params.t + 1) * m**params.D * kappa * 2.0 ** -(fm.v + 1)
    return AccuracyBound(delta, float(kappa), float(a_D), params.t, m, params.D, fm.v)


# ---------------------------------------------------------------------------
# trade-off table

TRADEOFF_HEADER = ("sigma_n", "log10_delta_f", "log10_eta_s", "flags")


@dataclass
class TradeoffRow:
    sigma_n: float
    log10_delta_f: float
    log10_eta_s: float
    flags: list[str] = field(default_factory=list)

    def as_tuple(self):
        return (self.sigma_n, self.log10_delta_f, self.log10_eta_s, ";".join(self.flags))


def tradeoff_table(
    sigma_grid: Sequence[float],
    template: ProtocolParams,
    fm: FloatModel = DOUBLE,
    a_D: float = 1.0,
) -> list[TradeoffRow]:
    """Accuracy bound against the collusion DS bound for each noise level.

    A row whose parameters are invalid carries an ``error:`` flag and NaN values
    instead of aborting the table; rows where the accuracy bound exceeds the
    secret scale r are flagged ``accuracy-vacuous``.
    """
    if len(sigma_grid) == 0:
        raise InvalidParameterError("sigma grid is empty")
    rows = []
    for sigma in sigma_grid:
        sigma = float(sigma)
        try:
            params = template.replace(sigma_n=sigma)
            bound = accuracy_bound(a_D, params, fm)
            eta = ds_bound_collusion(params.r, sigma, params.t)
        except AnalogShardsError as exc:
            rows.append(TradeoffRow(sigma, math.nan, math.nan, [f"error:{type(exc).__name__}"]))
            continue
        row = TradeoffRow(sigma, bound.log10, math.log10(eta) if eta > 0 else -math.inf)
        if params.r > 0 and bound.delta_f > params.r:
            row.flags.append("accuracy-vacuous")
        rows.append(row)
    return rows


def tradeoff_csv(rows: Sequence[TradeoffRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRADEOFF_HEADER)
    for row in rows:
        w.writerow(row.as_tuple())
    return buf.getvalue()


def tradeoff_json(rows: Sequence[TradeoffRow]) -> str:
    return json.dumps([asdict(r) for r in rows])


# ---------------------------------------------------------------------------
# Monte-Carlo check


def empirical_error(
    trials: int,
    coefficients: Sequence[float],
    params: ProtocolParams,
    rng: np.random.Generator | None = None,
    zero_noise: bool = False,
) -> float:
    """Largest |decoded - f(s)| over random secrets uniform in [-r, r].

    Runs encode -> per-server Horner evaluation -> decode in native float64,
    vectorized over trials.  ``coefficients`` are ascending (``c[k] * x**k``)
    and must have degree ``params.D``.
    """
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    if len(coefficients) - 1 != params.D:
        raise InvalidParameterError(
            f"polynomial degree {len(coefficients) - 1} does not match params.D={params.D}"
        )
    if rng is None:
        rng = np.random.default_rng(params.seed)
    secrets = rng.uniform(-params.r, params.r, size=trials)
    noise = NoiseDraw.zeros(params.t, trials) if zero_noise else sample_truncated_noise(params, trials, rng)
    shares = encode_secret(secrets, params, noise)
    results = polyval(list(coefficients), shares.shares)
    decoded = decode_constant(results, decoder_weights(params))
    exact = np.polynomial.polynomial.polyval(
        secrets.astype(np.longdouble), np.asarray(coefficients, dtype=np.longdouble)
    )
    err = np.abs(decoded.astype(np.clongdouble) - exact)
    return float(err.max())
