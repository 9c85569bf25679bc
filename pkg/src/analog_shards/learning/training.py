"""Logistic-regression training: plaintext baseline and the analog-shared protocol."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..accuracy import accuracy_bound
from ..errors import (
    HypothesisViolatedError,
    InvalidArgumentError,
    InvalidParameterError,
    SecretRangeWarning,
)
from ..runtime.master import Master, OperationCounts, Transcript
from ..runtime.transport import Transport
from ..sharing import NoiseDraw, ProtocolParams, sample_truncated_noise
from .mnist import Dataset

SIGMOID_MODES = ("exact", "degree1")


@dataclass(frozen=True)
class TrainingConfig:
    """Gradient-descent settings.

    ``params`` is only needed by the analog trainer, where it must have D = 3.
    """

    beta: float = 1e-6
    k: int = 25
    params: ProtocolParams | None = None
    sigmoid_mode: str = "exact"
    residue_rtol: float = 1e-3

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidParameterError(f"beta must be positive, got {self.beta}")
        if not isinstance(self.k, (int, np.integer)) or self.k < 0:
            raise InvalidParameterError(f"k must be a non-negative integer, got {self.k!r}")
        if self.sigmoid_mode not in SIGMOID_MODES:
            raise InvalidParameterError(f"sigmoid_mode must be one of {SIGMOID_MODES}, got {self.sigmoid_mode!r}")
        if self.residue_rtol <= 0:
            raise InvalidParameterError("residue_rtol must be positive")


@dataclass
class IterationRecord:
    iteration: int
    w: np.ndarray
    train_loss: float
    test_accuracy: float = math.nan
    residue_max: float = 0.0
    u_error: float = math.nan
    u_error_bound: float = math.nan
    notes: tuple[str, ...] = ()


@dataclass
class ModelState:
    w: np.ndarray
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    counts: OperationCounts = field(default_factory=OperationCounts)
    transcript: Transcript | None = None
    diagnostics: dict = field(default_factory=dict)


def sigmoid(x, mode: str = "exact"):
    """Logistic function, or its first-order expansion ``1/2 + x/4``."""
    if mode == "degree1":
        return 0.5 + np.asarray(x) / 4.0
    return expit(x)


def logistic_loss(X: np.ndarray, labels: np.ndarray, w: np.ndarray) -> float:
    """Mean cross-entropy with the exact sigmoid, evaluated without overflow."""
    z = X @ w
    return float(np.mean(np.logaddexp(0.0, z) - labels * z))


def evaluate(model, test: Dataset) -> float:
    """Fraction of ``test`` classified correctly; ``x.w > 0`` predicts 1, ties predict 0."""
    w = model.w if isinstance(model, ModelState) else np.asarray(model, dtype=float)
    if w.shape != (test.d,):
        raise InvalidArgumentError(f"model has {w.size} weights, data has {test.d} features")
    pred = (test.X @ w > 0).astype(float)
    return float(np.mean(pred == test.labels))


def gradient_step(X, labels, w, beta, mode="exact"):
    """One plaintext step ``w - (beta/m) X^T (g(X w) - l)``."""
    m = X.shape[0]
    return w - (beta / m) * (X.T @ (sigmoid(X @ w, mode) - labels))


def label_term(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``X^T (1 - 2 l)``, fixed for the whole run."""
    return X.T @ (1.0 - 2.0 * labels)


def linearized_step(w, u, c, beta, m):
    """Update with a (possibly decoded) ``u = X^T X w``: ``w - beta/(2m) (u/2 + c)``."""
    return w - (beta / (2.0 * m)) * (0.5 * u + c)


def _record(it, X, labels, w, test, **extra) -> IterationRecord:
    acc = evaluate(w, test) if test is not None else math.nan
    return IterationRecord(it, w.copy(), logistic_loss(X, labels, w), acc, **extra)


def train_centralized(data: Dataset, config: TrainingConfig, test: Dataset | None = None) -> ModelState:
    """Plaintext gradient descent from w = 0.

    The degree-1 mode is evaluated in the expanded form used by the analog
    protocol (``u = X^T (X w)``, then ``linearized_step``), which equals the
    direct step algebraically and makes the two trainers comparable bit-for-bit.
    """
    X, labels = data.X, data.labels
    w = np.zeros(data.d)
    state = ModelState(w)
    c = label_term(X, labels) if config.sigmoid_mode == "degree1" else None
    for it in range(1, config.k + 1):
        if config.sigmoid_mode == "degree1":
            w = linearized_step(w, X.T @ (X @ w), c, config.beta, data.m)
        else:
            w = gradient_step(X, labels, w, config.beta, "exact")
        state.history.append(_record(it, X, labels, w, test))
    state.w, state.iteration = w, config.k
    state.counts.master_flops = config.k * 4 * data.m * data.d
    return state


def drift_a_D(m_samples: int, d: int) -> float:
    """Certified bound on the leading share-polynomial coefficient of ``X^T X w``, in units of m^3.

    The leading coefficient of entry j is ``sum_i sum_k N_ij N_ik n_k`` with
    every noise entry at most m in modulus, hence at most ``m_samples * d * m^3``.
    """
    return float(m_samples * d)


def train_analog(
    data: Dataset,
    config: TrainingConfig,
    transport: Transport | None = None,
    test: Dataset | None = None,
    rng: np.random.Generator | None = None,
    zero_noise: bool = False,
    check_drift: bool = True,
    keep_payloads: bool = False,
) -> ModelState:
    """Privacy-preserving training with analog shares of X (once) and of w (every iteration).

    Each iteration the workers return shares of ``X^T X w``; the master decodes
    it, keeps the real part, logs the imaginary residue and applies
    ``linearized_step``. With ``check_drift`` the decoded product is compared
    with the plaintext one and the gap is asserted against the accuracy bound.

    Raises:
        InvalidParameterError: missing params or params.D != 3.
        ProtocolFailureError: a worker failed (propagated from the runtime).
    """
    params = config.params
    if params is None:
        raise InvalidParameterError("analog training needs config.params")
    if params.D != 3:
        raise InvalidParameterError(f"analog training evaluates a degree-3 product; params.D={params.D}")
    if data.max_abs > params.r:
        raise InvalidParameterError(f"data magnitude {data.max_abs} exceeds r={params.r}")
    X, labels = data.X, data.labels
    m, d = X.shape
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    master = Master(params, transport, rng, keep_payloads)

    def draw(shape):
        return NoiseDraw.zeros(params.t, shape) if zero_noise else sample_truncated_noise(params, shape, rng)

    noise_X = draw((m, d))
    master.share_data(X, noise_X)
    c = label_term(X, labels)
    a_D = drift_a_D(m, d)
    try:
        bound = accuracy_bound(a_D, params).delta_f
    except HypothesisViolatedError:
        bound = math.nan
    lead_X = noise_X.coeffs[-1]
    observed_a_D = 0.0

    w = np.zeros(d)
    state = ModelState(w, diagnostics={"a_D": a_D, "u_error_bound": bound})
    for it in range(1, config.k + 1):
        notes = []
        noise_w = draw(d)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SecretRangeWarning)
            u = master.lr_product(w, noise_w)
        if any(issubclass(x.category, SecretRangeWarning) for x in caught):
            notes.append("weights-exceed-r")
        u_real = u.real.copy()
        residue = float(np.max(np.abs(u.imag)))
        if residue > config.residue_rtol * max(float(np.linalg.norm(u_real)), np.finfo(float).tiny):
            notes.append("numerical-degradation")
        u_error = math.nan
        if check_drift:
            u_error = float(np.max(np.abs(u - X.T @ (X @ w))))
            if not zero_noise:
                lead = np.abs(lead_X.T @ (lead_X @ noise_w.coeffs[-1])).max() / params.m**3
                observed_a_D = max(observed_a_D, float(lead))
            if math.isfinite(bound) and u_error > bound:
                notes.append("drift-exceeds-bound")
        w = linearized_step(w, u_real, c, config.beta, m)
        state.history.append(
            _record(it, X, labels, w, test, residue_max=residue, u_error=u_error,
                    u_error_bound=bound, notes=tuple(notes))
        )
    master.shutdown()
    state.w, state.iteration = w, config.k
    state.counts = OperationCounts(**vars(master.counts))
    state.transcript = master.transcript
    state.diagnostics["observed_a_D"] = observed_a_D
    if transport is None:
        master.transport.close()
    return state


def propagated_drift(history, X: np.ndarray, beta: float, field_name: str = "u_error") -> float:
    """Bound on ||w_analog - w_plain||_2 after the recorded iterations.

    Errors in decoded ``u`` enter each update scaled by ``beta/(4m)`` and are
    carried forward by the linear map ``I - beta/(4m) X^T X``:
    ``e_{j+1} <= ||I - g X^T X||_2 e_j + g sqrt(d) max|du_j|`` with ``g = beta/(4m)``.
    ``field_name`` selects observed errors (``u_error``) or certified bounds
    (``u_error_bound``).
    """
    m, d = X.shape
    g = beta / (4.0 * m)
    contraction = float(np.linalg.norm(np.eye(d) - g * (X.T @ X), 2))
    e = 0.0
    for rec in history:
        e = contraction * e + g * math.sqrt(d) * getattr(rec, field_name)
    return e
