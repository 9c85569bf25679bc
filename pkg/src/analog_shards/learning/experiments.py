"""Run reports, privacy accounting and the trainer comparison loop."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..privacy import ds_bound_collusion, ds_bound_single, privacy_report
from ..runtime.master import TO_MASTER, TO_WORKER, Transcript
from ..sharing import ProtocolParams
from .fixed_point import FixedPointConfig, train_fixed_point
from .mnist import Dataset, subsample
from .training import ModelState, TrainingConfig, train_analog, train_centralized

CURVE_HEADER = ("iteration", "train_loss", "test_accuracy", "residue_max", "u_error_bound")
TRAINERS = ("analog", "centralized", "fixed-point")


def privacy_accounting(params: ProtocolParams, k: int) -> dict:
    """Leakage of the shared dataset (sent once) and of the model (k rounds of fresh weight shares).

    The per-round DS bound is the exact single-server bound when t = 1 and the
    collusion bound (via mutual information) otherwise; the model leaks at
    most ``k`` times that.
    """
    if params.t == 1:
        eta, path = ds_bound_single(params.r, params.sigma_n), "single-server-hellinger"
    else:
        eta, path = ds_bound_collusion(params.r, params.sigma_n, params.t), "collusion-mutual-information"
    return {
        "dataset_eta_s": eta,
        "per_iteration_eta_s": eta,
        "model_eta_s": k * eta,
        "iterations": int(k),
        "path": path,
        "report": privacy_report(params.r, params.sigma_n, params.t, params.alpha).to_dict(),
    }


def curve_csv(state: ModelState) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for rec in state.history:
        writer.writerow([rec.iteration, repr(rec.train_loss), repr(rec.test_accuracy),
                         repr(rec.residue_max), repr(rec.u_error_bound)])
    return buf.getvalue()


def inter_worker_messages(transcript: Transcript | None) -> int:
    """Messages not exchanged between the master and a worker."""
    if transcript is None:
        return 0
    return sum(1 for e in transcript.entries if e.direction not in (TO_WORKER, TO_MASTER))


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def run_report(state: ModelState, trainer: str, config: TrainingConfig, seed: int,
               test_accuracy: float | None = None, fxp: FixedPointConfig | None = None) -> dict:
    doc = {
        "trainer": trainer,
        "seed": seed,
        "beta": config.beta,
        "k": config.k,
        "sigmoid_mode": config.sigmoid_mode,
        "test_accuracy": test_accuracy,
        "final_train_loss": state.history[-1].train_loss if state.history else None,
        "counts": asdict(state.counts),
        "inter_worker_messages": inter_worker_messages(state.transcript),
        "diagnostics": state.diagnostics,
        "notes": sorted({n for rec in state.history for n in rec.notes}),
    }
    if config.params is not None:
        doc["params"] = config.params.public_dict()
        if trainer == "analog":
            doc["privacy"] = privacy_accounting(config.params, config.k)
    if fxp is not None:
        doc["fixed_point"] = {"field_prime": fxp.field_prime, "frac_bits": fxp.frac_bits,
                              "N": fxp.N, "t": fxp.t}
    return _jsonable(doc)


def dumps(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# comparison across dataset sizes


@dataclass
class CompareResult:
    """Test accuracy per (dataset size, trainer), averaged over seeded repeats."""

    sizes: list[int]
    repeats: int
    accuracy: dict[tuple[int, str], np.ndarray] = field(default_factory=dict)  # repeats x k
    counts: dict[str, dict] = field(default_factory=dict)
    inter_worker: dict[str, int] = field(default_factory=dict)

    def final_mean(self, n: int, trainer: str) -> float:
        return float(np.mean(self.accuracy[(n, trainer)][:, -1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("n_samples", "trainer", "iteration", "mean_test_accuracy", "std_test_accuracy"))
        for (n, trainer), acc in sorted(self.accuracy.items()):
            for j in range(acc.shape[1]):
                writer.writerow((n, trainer, j + 1, repr(float(acc[:, j].mean())), repr(float(acc[:, j].std()))))
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "sizes": self.sizes,
            "repeats": self.repeats,
            "final_mean_accuracy": {
                trainer: {str(n): self.final_mean(n, trainer) for n in self.sizes}
                for trainer in sorted({t for _, t in self.accuracy})
            },
            "mean_counts": self.counts,
            "inter_worker_messages": self.inter_worker,
        }


def compare(
    pool: Dataset,
    test: Dataset,
    sizes,
    repeats: int,
    analog: TrainingConfig,
    centralized: TrainingConfig,
    fixed: TrainingConfig,
    fxp: FixedPointConfig,
    seed: int = 0,
    trainers=TRAINERS,
) -> CompareResult:
    """Train every requested trainer on ``repeats`` balanced draws of each size.

    Sizes count samples over both classes and must be even. Each repeat uses
    one draw for all trainers, so their accuracies are paired.
    """
    sizes = [int(n) for n in sizes]
    if any(n < 2 or n % 2 for n in sizes):
        raise ValueError(f"dataset sizes must be even and >= 2, got {sizes}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    unknown = set(trainers) - set(TRAINERS)
    if unknown:
        raise ValueError(f"unknown trainers {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    result = CompareResult(sizes, repeats)
    totals: dict[str, dict] = {t: {} for t in trainers}
    runs = {t: 0 for t in trainers}
    for n in sizes:
        curves = {t: [] for t in trainers}
        for _ in range(repeats):
            draw = subsample(pool, n // 2, rng)
            child = np.random.default_rng(rng.integers(2**63))
            for trainer in trainers:
                if trainer == "analog":
                    state = train_analog(draw, analog, test=test, rng=child, check_drift=False)
                    result.inter_worker[trainer] = result.inter_worker.get(trainer, 0) + inter_worker_messages(
                        state.transcript)
                elif trainer == "centralized":
                    state = train_centralized(draw, centralized, test=test)
                else:
                    state = train_fixed_point(draw, fixed, fxp, test=test, rng=child)
                curves[trainer].append([rec.test_accuracy for rec in state.history])
                for key, value in asdict(state.counts).items():
                    totals[trainer][key] = totals[trainer].get(key, 0) + value
                runs[trainer] += 1
        for trainer in trainers:
            result.accuracy[(n, trainer)] = np.array(curves[trainer])
    result.counts = {t: {k: v / runs[t] for k, v in totals[t].items()} for t in trainers}
    for trainer in trainers:
        result.inter_worker.setdefault(trainer, 0)
    return result
