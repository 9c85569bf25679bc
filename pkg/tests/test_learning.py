import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analog_shards.errors import InsufficientServersError, InvalidArgumentError, InvalidParameterError
from analog_shards.learning.experiments import curve_csv, inter_worker_messages, privacy_accounting, run_report
from analog_shards.learning.mnist import Dataset
from analog_shards.learning.training import (
    TrainingConfig,
    evaluate,
    gradient_step,
    label_term,
    linearized_step,
    logistic_loss,
    propagated_drift,
    sigmoid,
    train_analog,
    train_centralized,
)
from analog_shards.runtime import InProcessTransport
from analog_shards.sharing import ProtocolParams

TOY = Dataset(np.eye(2), [1, 0])


def analog_config(**kw):
    params = kw.pop("params", ProtocolParams(N=4, t=1, D=3, sigma_n=1e3, r=1.0))
    return TrainingConfig(beta=kw.pop("beta", 1.0), k=kw.pop("k", 1), params=params, sigmoid_mode="degree1", **kw)


def blobs(m, d, seed):
    rng = np.random.default_rng(seed)
    lab = np.arange(m) % 2
    shift = np.where(lab[:, None] == 1, 0.1, -0.1) * np.sign(np.arange(d) - d / 2 + 0.5)
    return Dataset(np.clip(0.5 + 0.15 * rng.normal(size=(m, d)) + shift, 0, 1), lab)


class TestConfig:
    def test_defaults(self):
        cfg = TrainingConfig()
        assert (cfg.beta, cfg.k, cfg.sigmoid_mode) == (1e-6, 25, "exact")

    @pytest.mark.parametrize("kw", [{"beta": 0}, {"k": -1}, {"k": 1.5}, {"sigmoid_mode": "cubic"}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameterError):
            TrainingConfig(**kw)


class TestCentralized:
    @pytest.mark.parametrize("mode", ["degree1", "exact"])
    def test_hand_example(self, mode):
        state = train_centralized(TOY, TrainingConfig(beta=1.0, k=1, sigmoid_mode=mode))
        np.testing.assert_array_equal(state.w, [0.25, -0.25])

    def test_zero_iterations(self):
        state = train_centralized(TOY, TrainingConfig(beta=1.0, k=0))
        np.testing.assert_array_equal(state.w, [0, 0])
        assert state.history == []

    def test_extreme_logits_stay_finite(self):
        data = Dataset(np.array([[1e6, 0.0], [0.0, 1e6]]), [0, 1])
        state = train_centralized(data, TrainingConfig(beta=1.0, k=3))
        assert np.all(np.isfinite(state.w))
        assert np.isfinite(state.history[-1].train_loss)

    def test_loss_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        X, w = rng.normal(size=(6, 3)), rng.normal(size=3)
        labels = np.array([1, 0, 1, 1, 0, 0.0])
        p = 1 / (1 + np.exp(-X @ w))
        direct = -np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p))
        assert logistic_loss(X, labels, w) == pytest.approx(direct, rel=1e-12)

    def test_deterministic(self):
        data = blobs(40, 5, 0)
        a = train_centralized(data, TrainingConfig(beta=0.5, k=5))
        b = train_centralized(data, TrainingConfig(beta=0.5, k=5))
        np.testing.assert_array_equal(a.w, b.w)


@settings(max_examples=100, deadline=None)
@given(m=st.integers(1, 8), d=st.integers(1, 6), beta=st.floats(1e-3, 2.0), seed=st.integers(0, 2**32 - 1))
def test_update_form_identity(m, d, beta, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(m, d))
    labels = rng.integers(0, 2, size=m).astype(float)
    w = rng.uniform(-1, 1, size=d)
    direct = gradient_step(X, labels, w, beta, "degree1")
    via_u = linearized_step(w, X.T @ (X @ w), label_term(X, labels), beta, m)
    np.testing.assert_allclose(via_u, direct, rtol=0, atol=1e-12)


class TestEvaluate:
    def test_tie_predicts_zero(self):
        data = Dataset(np.ones((4, 2)), [1, 0, 1, 0])
        assert evaluate(np.zeros(2), data) == 0.5

    def test_separable(self):
        data = Dataset(np.array([[1.0, 0], [0, 1.0], [2, 0.5]]), [1, 0, 1])
        assert evaluate(np.array([1.0, -1.0]), data) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            evaluate(np.zeros(3), TOY)

    def test_sigmoid_modes(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(2.0, "degree1") == 1.0


class TestAnalog:
    def test_hand_example_zero_noise(self):
        state = train_analog(TOY, analog_config(), zero_noise=True)
        np.testing.assert_array_equal(state.w, [0.25, -0.25])

    def test_zero_noise_bit_identical(self):
        data = blobs(60, 8, 1)
        cfg = analog_config(beta=0.5, k=10)
        analog = train_analog(data, cfg, zero_noise=True)
        plain = train_centralized(data, cfg)
        for a, b in zip(analog.history, plain.history):
            np.testing.assert_array_equal(a.w, b.w)
            assert a.residue_max == 0.0
            assert a.u_error == 0.0

    def test_needs_four_servers(self):
        with pytest.raises(InsufficientServersError):
            analog_config(params=ProtocolParams(N=3, t=1, D=3, sigma_n=1.0))

    def test_needs_degree_three(self):
        with pytest.raises(InvalidParameterError):
            train_analog(TOY, analog_config(params=ProtocolParams(N=4, t=1, D=1, sigma_n=1.0, r=1.0)))

    def test_data_outside_range(self):
        with pytest.raises(InvalidParameterError):
            train_analog(Dataset(2 * np.eye(2), [1, 0]), analog_config())

    def test_noisy_run_within_bound(self):
        data = blobs(50, 6, 2)
        cfg = analog_config(beta=0.5, k=8, params=ProtocolParams(N=4, t=1, D=3, sigma_n=1e2, r=1.0))
        state = train_analog(data, cfg, rng=np.random.default_rng(0))
        plain = train_centralized(data, cfg)
        for rec in state.history:
            assert rec.u_error <= rec.u_error_bound
            assert "drift-exceeds-bound" not in rec.notes
        assert state.diagnostics["observed_a_D"] <= state.diagnostics["a_D"]
        drift = propagated_drift(state.history, data.X, cfg.beta)
        assert np.linalg.norm(state.w - plain.w) <= drift
        assert np.linalg.norm(state.w - plain.w) <= propagated_drift(state.history, data.X, cfg.beta,
                                                                      "u_error_bound")

    def test_transport_counts_and_isolation(self):
        data = blobs(20, 4, 3)
        state = train_analog(data, analog_config(k=3), transport=InProcessTransport(4),
                             rng=np.random.default_rng(1))
        # shares of X once, w per iteration, shutdown: 4 requests each, replies except shutdown
        assert state.counts.messages == 4 * (1 + 3 + 3 + 1) + 4 * (1 + 3 + 3)
        assert inter_worker_messages(state.transcript) == 0

    def test_weights_outside_range_noted(self):
        data = blobs(20, 4, 3)
        state = train_analog(data, analog_config(beta=50.0, k=3), rng=np.random.default_rng(1))
        assert any("weights-exceed-r" in rec.notes for rec in state.history)


class TestReports:
    def test_privacy_accounting_single(self):
        params = ProtocolParams(N=4, t=1, D=3, sigma_n=1e18, r=255.0)
        acc = privacy_accounting(params, 15)
        assert acc["dataset_eta_s"] == pytest.approx(3.6062445841428428e-16, rel=1e-12)
        assert acc["model_eta_s"] == pytest.approx(15 * acc["dataset_eta_s"], rel=1e-15)
        assert acc["path"] == "single-server-hellinger"

    def test_privacy_accounting_collusion(self):
        params = ProtocolParams(N=7, t=2, D=3, sigma_n=1e5, r=255.0)
        acc = privacy_accounting(params, 4)
        assert acc["path"] == "collusion-mutual-information"
        assert acc["model_eta_s"] == 4 * acc["per_iteration_eta_s"]

    def test_curve_and_report(self):
        data = blobs(20, 4, 4)
        cfg = analog_config(k=2)
        state = train_analog(data, cfg, test=data, rng=np.random.default_rng(0))
        lines = curve_csv(state).strip().splitlines()
        assert lines[0] == "iteration,train_loss,test_accuracy,residue_max,u_error_bound"
        assert len(lines) == 3
        report = run_report(state, "analog", cfg, seed=0, test_accuracy=state.history[-1].test_accuracy)
        assert report["privacy"]["model_eta_s"] == pytest.approx(2 * report["privacy"]["dataset_eta_s"])
        assert report["inter_worker_messages"] == 0
        assert report["params"]["N"] == 4
