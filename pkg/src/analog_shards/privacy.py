"""Privacy bounds for analog sharing and numerical oracles they must dominate.

Two leakage metrics are covered:

* MIS: worst-case mutual information (bits) between the secret and the shares
  seen by one server or by a colluding set of t servers.
* DS: worst-case total-variation distance between share distributions for two
  different secrets (dimensionless, at most 1; the bounds here cap at sqrt(2)).

All bounds depend on the secret only through ``r / sigma_n``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import erf

from .errors import InvalidArgumentError, InvalidParameterError, SingularityError
from .sharing import ProtocolParams

LN2 = math.log(2.0)
ASYMPTOTIC_RATIO = 1e-3
SQRT2 = math.sqrt(2.0)


def _check_sigma(sigma_n: float) -> None:
    if not sigma_n > 0:
        raise InvalidParameterError(f"sigma_n must be positive, got {sigma_n}")


def _check_r(r: float) -> None:
    if not r >= 0:
        raise InvalidParameterError(f"r must be non-negative, got {r}")


def _check_t(t: int) -> None:
    if int(t) != t or t < 1:
        raise InvalidParameterError(f"t must be a positive integer, got {t}")


def regime(r: float, sigma_n: float) -> str:
    """``"small-ratio-asymptotic"`` when r/sigma_n < 1e-3, else ``"exact"``."""
    return "small-ratio-asymptotic" if r / sigma_n < ASYMPTOTIC_RATIO else "exact"


# ---------------------------------------------------------------------------
# mutual-information security


def mis_bound_single(r: float, sigma_n: float) -> float:
    """AWGN-capacity bound log2(1 + r^2/sigma_n^2) on single-server leakage, in bits."""
    _check_sigma(sigma_n)
    _check_r(r)
    return math.log1p((r / sigma_n) ** 2) / LN2


def mis_asymptote_single(r: float, sigma_n: float) -> float:
    """Leading term (1/ln 2) r^2/sigma_n^2 of :func:`mis_bound_single`."""
    _check_sigma(sigma_n)
    return (r / sigma_n) ** 2 / LN2


def mis_bound_collusion(r: float, sigma_n: float, t: int) -> float:
    """Leakage bound log2(1 + r^2 t^2 / sigma_n^2) for t colluding servers."""
    _check_t(t)
    _check_sigma(sigma_n)
    _check_r(r)
    return math.log1p((r * t / sigma_n) ** 2) / LN2


def mis_asymptote_collusion(r: float, sigma_n: float, t: int) -> float:
    _check_t(t)
    _check_sigma(sigma_n)
    return (t * r / sigma_n) ** 2 / LN2


@dataclass(frozen=True)
class CollusionNoiseModel:
    """Second-order statistics of the noise seen by a colluding set.

    Server ``a`` sees ``s + tilde_n_a`` with ``tilde_n_a = sum_j omega_a^j n_j``.
    ``covariance[a, b] = E[tilde_n_a conj(tilde_n_b)]`` and ``nu_max`` is the largest
    eigenvalue of ``inv(covariance / sigma_n^2)``.
    """

    indices: tuple[int, ...]
    covariance: np.ndarray
    nu_max: float
    sigma_n: float

    @property
    def t(self) -> int:
        return len(self.indices)

    def normalized(self) -> np.ndarray:
        return self.covariance / self.sigma_n**2


def _nu_max(normalized: np.ndarray) -> float:
    sv = np.linalg.svd(normalized, compute_uv=False)
    if sv[-1] <= sv[0] * normalized.shape[0] * 1e-13:
        raise SingularityError("noise covariance is singular")
    inv = np.linalg.inv(normalized)
    inv = (inv + inv.conj().T) / 2
    return float(np.linalg.eigvalsh(inv)[-1])


def covariance_model(covariance, sigma_n: float, indices: Sequence[int] | None = None) -> CollusionNoiseModel:
    """Wrap an explicit covariance matrix (e.g. ``sigma_n**2 * I``)."""
    _check_sigma(sigma_n)
    cov = np.atleast_2d(np.asarray(covariance, dtype=complex))
    if cov.shape[0] != cov.shape[1]:
        raise InvalidArgumentError(f"covariance must be square, got {cov.shape}")
    if indices is None:
        indices = tuple(range(1, cov.shape[0] + 1))
    return CollusionNoiseModel(tuple(indices), cov, _nu_max(cov / sigma_n**2), float(sigma_n))


def noise_covariance(params: ProtocolParams, indices: Sequence[int]) -> CollusionNoiseModel:
    """Exact covariance of the effective noise seen by the colluding servers.

    ``E[tilde_n_a conj(tilde_n_b)] = (sigma_n^2/t) * sum_{j=1..t} (omega_a conj(omega_b))^j``;
    the diagonal is exactly sigma_n^2 for unit-modulus points.  Truncation of the
    coefficients is ignored (its effect on the variance is O(exp(-alpha^2))).
    """
    idx = tuple(int(i) for i in indices)
    if not idx:
        raise InvalidArgumentError("colluding set is empty")
    if len(set(idx)) != len(idx):
        raise InvalidArgumentError(f"duplicate server indices in colluding set {idx}")
    if any(i < 1 or i > params.N for i in idx):
        raise InvalidArgumentError(f"server indices must lie in 1..{params.N}, got {idx}")
    pts = params.points[[i - 1 for i in idx]]
    ratio = pts[:, None] * pts.conj()[None, :]
    j = np.arange(1, params.t + 1)
    sums = (ratio[..., None] ** j).sum(axis=-1)
    diag = np.abs(pts) ** 2
    sums[np.diag_indices(len(idx))] = (diag[:, None] ** j).sum(axis=-1)
    cov = (params.sigma_n**2 / params.t) * sums
    return CollusionNoiseModel(idx, cov, _nu_max(cov / params.sigma_n**2), float(params.sigma_n))


def normalized_collusion_matrix(t: int) -> np.ndarray:
    """``((t+1)/t) I - (1/t) 1 1^T``: normalized covariance when N = t + 1."""
    _check_t(t)
    return (t + 1) / t * np.eye(t) - np.ones((t, t)) / t


def simo_bound_general(model: CollusionNoiseModel, r: float, sigma_n: float) -> float:
    """SIMO-capacity leakage bound log2(1 + r^2 ||h||^2 nu / sigma_n^2) with h = all-ones.

    ``nu`` is the largest eigenvalue of the inverse normalized covariance.
    """
    _check_sigma(sigma_n)
    _check_r(r)
    h_norm2 = model.t
    return math.log1p((r / sigma_n) ** 2 * h_norm2 * model.nu_max) / LN2


# ---------------------------------------------------------------------------
# distinguishing security


def hellinger_gaussian(mu1: complex, mu2: complex, sigma: float) -> float:
    """Hellinger distance between CN(mu1, sigma^2) and CN(mu2, sigma^2)."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    x = abs(complex(mu1) - complex(mu2)) ** 2 / (4 * sigma**2)
    return math.sqrt(-math.expm1(-x))


def ds_bound_single(r: float, sigma_n: float) -> float:
    """Hellinger-based DS bound sqrt(2 (1 - exp(-r^2/sigma_n^2))) for one server."""
    _check_sigma(sigma_n)
    _check_r(r)
    return SQRT2 * math.sqrt(-math.expm1(-((r / sigma_n) ** 2)))


def ds_asymptote_single(r: float, sigma_n: float) -> float:
    """Leading term sqrt(2) r / sigma_n of :func:`ds_bound_single`."""
    _check_sigma(sigma_n)
    return SQRT2 * r / sigma_n


def ds_from_mis(eta_c: float) -> float:
    """DS bound sqrt(2 eta_c) implied by an MIS bound (Pinsker-type relation)."""
    if not eta_c >= 0:
        raise InvalidArgumentError(f"eta_c must be non-negative, got {eta_c}")
    return math.sqrt(2 * eta_c)


def ds_bound_collusion(r: float, sigma_n: float, t: int) -> float:
    """DS bound for t colluding servers: sqrt(2 log2(1 + t^2 r^2 / sigma_n^2))."""
    return ds_from_mis(mis_bound_collusion(r, sigma_n, t))


def ds_asymptote_collusion(r: float, sigma_n: float, t: int) -> float:
    _check_sigma(sigma_n)
    return math.sqrt(2 / LN2) * t * r / sigma_n


class TruncatedBound(NamedTuple):
    """DS bound under truncated noise.

    ``excess = eta_s_truncated - eta_s`` is computed without cancellation so that
    sub-ulp differences stay visible.
    """

    eta_s_truncated: float
    w_lower: float
    eta_s: float
    excess: float
    tail: float
    degraded: bool
    vacuous: bool


def ds_bound_truncated(r: float, sigma_n: float, t: int, alpha: float) -> TruncatedBound:
    """DS bound when each noise coefficient is truncated at alpha*sigma_n/sqrt(t).

    ``eta' <= (eta_s + (2 exp(-(alpha - 2 r sqrt(t)/sigma_n)^2 / 2))^t) / w`` with
    ``w >= (1 - 2 exp(-alpha^2/2))^t`` and ``eta_s`` the collusion DS bound.

    ``degraded`` is set when alpha <= 2 r sqrt(t)/sigma_n (tail term no longer
    shrinks with alpha); ``vacuous`` when w_lower <= 0 or the bound exceeds sqrt(2).
    """
    _check_t(t)
    _check_sigma(sigma_n)
    _check_r(r)
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    eta = ds_bound_collusion(r, sigma_n, t)
    shift = 2 * r * math.sqrt(t) / sigma_n
    degraded = alpha <= shift
    tail = (2 * math.exp(-0.5 * (alpha - shift) ** 2)) ** t
    q = 2 * math.exp(-(alpha**2) / 2)
    if q >= 1:
        return TruncatedBound(math.inf, (1 - q) ** t if q > 1 else 0.0, eta, math.inf, tail, degraded, True)
    log_w = t * math.log1p(-q)
    w_lower = math.exp(log_w)
    inv_w_minus_1 = math.expm1(-log_w)
    excess = eta * inv_w_minus_1 + tail / w_lower
    value = eta + excess
    return TruncatedBound(value, w_lower, eta, excess, tail, degraded, value > SQRT2)


# ---------------------------------------------------------------------------
# oracles


def tv_oracle_single(r: float, sigma_n: float) -> float:
    """Exact TV distance between CN(-r, sigma_n^2) and CN(r, sigma_n^2): erf(r/sigma_n).

    Only the component along the mean difference matters; it is N(+-r, sigma_n^2/2).
    """
    _check_sigma(sigma_n)
    _check_r(r)
    return float(erf(r / sigma_n))


def mi_oracle_single(r: float, sigma_n: float, resolution: int = 128, hermite_nodes: int = 120) -> float:
    """I(S; S + n) in bits for n ~ CN(0, sigma_n^2) and S spread over [-r, r].

    S is the discrete distribution on the ``resolution`` Gauss-Legendre nodes of
    [-r, r] with the Legendre weights as probabilities, i.e. a quadrature
    rendering of the uniform law.  Being itself supported in [-r, r], it is an
    admissible input, so the result is a valid witness below any MIS bound.
    Only the real part of the output carries information; the remaining
    integral over the noise is done with Gauss-Hermite quadrature in log-space,
    which avoids the cancellation of h(Y) - h(N) at tiny r/sigma_n.
    """
    _check_sigma(sigma_n)
    _check_r(r)
    if resolution < 64:
        raise InvalidParameterError(f"resolution must be >= 64, got {resolution}")
    if r == 0:
        return 0.0
    # real part of the noise has std sigma_n/sqrt(2); work in units of that std
    rho = r / (sigma_n / SQRT2)
    x, wx = np.polynomial.legendre.leggauss(resolution)
    x = rho * x
    px = wx / 2.0
    v, wv = np.polynomial.hermite_e.hermegauss(hermite_nodes)
    wv = wv / math.sqrt(2 * math.pi)
    log_px = np.log(px)
    total = 0.0
    for xk, pk in zip(x, px):
        y = v + xk
        # log p(y) - log phi(y - xk), both without the common normalization
        diff = y[:, None] - x[None, :]
        log_mix = np.logaddexp.reduce(-0.5 * diff**2 + log_px[None, :], axis=1)
        total += pk * np.dot(wv, -0.5 * v**2 - log_mix)
    return max(total, 0.0) / LN2


# ---------------------------------------------------------------------------
# report


REPORT_FIELDS = (
    "eta_c_bits",
    "eta_s",
    "eta_s_truncated",
    "w_lower",
    "regime",
    "r",
    "sigma_n",
    "t",
    "alpha",
    "eta_s_single",
)


@dataclass(frozen=True)
class PrivacyReport:
    """Every bound for one (r, sigma_n, t, alpha) setting.

    ``eta_c_bits`` and ``eta_s`` follow the collusion (MIS then DS) path;
    ``eta_s_single`` is the tighter Hellinger bound for a single server.
    """

    eta_c_bits: float
    eta_s: float
    eta_s_truncated: float
    w_lower: float
    regime: str
    r: float
    sigma_n: float
    t: int
    alpha: float
    eta_s_single: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(REPORT_FIELDS)
        writer.writerow([getattr(self, f) for f in REPORT_FIELDS])
        return buf.getvalue()


def privacy_report(r: float, sigma_n: float, t: int = 1, alpha: float = 10.0) -> PrivacyReport:
    eta_c = mis_bound_collusion(r, sigma_n, t)
    trunc = ds_bound_truncated(r, sigma_n, t, alpha)
    return PrivacyReport(
        eta_c_bits=eta_c,
        eta_s=ds_from_mis(eta_c),
        eta_s_truncated=trunc.eta_s_truncated,
        w_lower=trunc.w_lower,
        regime=regime(r, sigma_n),
        r=float(r),
        sigma_n=float(sigma_n),
        t=int(t),
        alpha=float(alpha),
        eta_s_single=ds_bound_single(r, sigma_n),
    )
