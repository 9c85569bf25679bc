import random
import time

import numpy as np
import pytest

from analog_shards.accuracy import accuracy_bound
from analog_shards.errors import InvalidArgumentError, ProtocolFailureError, TransportError
from analog_shards.runtime import (
    InProcessTransport,
    Master,
    MessageKind,
    SocketTransport,
    WireMessage,
    Worker,
    local_worker_processes,
    run_protocol,
)
from analog_shards.runtime.master import TO_MASTER, TO_WORKER
from analog_shards.runtime.wire import TaskSpec, lr_task, pack_shares, polynomial_task, unpack_shares
from analog_shards.runtime.worker import worker_eval
from analog_shards.shareio import shares_from_bytes
from analog_shards.sharing import NoiseDraw, ProtocolParams, ShareSet

DIGEST = b"\x01" * 32


class TestWorkerEval:
    def test_identity(self):
        out = worker_eval({"s": np.array(3 - 1j)}, polynomial_task([0, 1], DIGEST, ()))
        assert out == 3 - 1j

    def test_square_plus_one(self):
        out = worker_eval({"s": np.array(2j)}, polynomial_task([1, 0, 1], DIGEST, ()))
        assert out == -3

    def test_lr_identity_data(self):
        slots = {"X": np.eye(2, dtype=complex), "w": np.array([1, 2], dtype=complex)}
        np.testing.assert_array_equal(worker_eval(slots, lr_task(DIGEST, 2)), [1, 2])

    def test_lr_matches_dense(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(7, 3)) + 1j * rng.normal(size=(7, 3))
        w = rng.normal(size=3) + 1j * rng.normal(size=3)
        out = worker_eval({"X": X, "w": w}, lr_task(DIGEST, 3))
        np.testing.assert_allclose(out, X.T @ (X @ w), rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(Exception, match="shape mismatch"):
            worker_eval({"X": np.eye(2, dtype=complex), "w": np.ones(3, complex)}, lr_task(DIGEST, 2))

    def test_missing_slot(self):
        with pytest.raises(Exception, match="never received"):
            worker_eval({}, polynomial_task([0, 1], DIGEST, ()))


class TestWorker:
    def _shares(self, worker, slot, arr, task_id=1):
        ss = ShareSet(np.asarray(arr, dtype=complex)[None], DIGEST, (worker.server_index,))
        return worker.handle(WireMessage(MessageKind.SHARES, task_id, worker.server_index, pack_shares(slot, ss)))

    def test_task_cycle(self):
        w = Worker(2)
        assert self._shares(w, "s", [2j, 1]).kind == MessageKind.RESULT
        task = polynomial_task([1, 0, 1], DIGEST, (2,))
        reply = w.handle(WireMessage(MessageKind.TASK, 2, 2, task.to_bytes()))
        assert reply.kind == MessageKind.RESULT
        np.testing.assert_array_equal(shares_from_bytes(reply.payload).shares[0], [-3, 2])
        assert w.flops > 0

    def test_task_ids_must_increase(self):
        w = Worker(1)
        self._shares(w, "s", [1], task_id=5)
        reply = self._shares(w, "s", [1], task_id=5)
        assert reply.kind == MessageKind.ERROR
        assert b"not greater" in reply.payload

    def test_wrong_server_index(self):
        reply = Worker(1).handle(WireMessage(MessageKind.TASK, 1, 2, b""))
        assert reply.kind == MessageKind.ERROR

    def test_digest_mismatch(self):
        w = Worker(1)
        self._shares(w, "s", [1])
        task = polynomial_task([0, 1], b"\x02" * 32, (1,))
        reply = w.handle(WireMessage(MessageKind.TASK, 2, 1, task.to_bytes()))
        assert reply.kind == MessageKind.ERROR
        assert b"different parameters" in reply.payload

    def test_shutdown(self):
        w = Worker(1)
        assert w.handle(WireMessage(MessageKind.SHUTDOWN, 1, 1)) is None
        assert w.closed

    def test_corrupted_request(self):
        blob = bytearray(WireMessage(MessageKind.TASK, 1, 1, b"xyz").to_bytes())
        blob[24] ^= 0xFF
        reply = WireMessage.from_bytes(Worker(1).handle_bytes(bytes(blob)))
        assert reply.kind == MessageKind.ERROR
        assert reply.payload.startswith(b"TransportError")


class TestRunProtocol:
    def test_zero_noise_identity_exact(self):
        p = ProtocolParams(N=2, t=1, D=1, sigma_n=1.0)
        res = run_protocol(1.0, [0, 1], p, noise=NoiseDraw.zeros(1))
        assert res.value == 1.0
        assert res.real == 1.0

    def test_cubic(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1e3, r=2.0)
        res = run_protocol(1.5, [0, -1, 0, 1], p, rng=np.random.default_rng(3))
        bound = accuracy_bound(1.0, p).delta_f
        assert abs(res.real - 1.875) <= bound
        assert res.residue <= bound
        assert res.error_bound == bound

    def test_counts(self):
        p = ProtocolParams(N=3, t=1, D=2, sigma_n=1.0, r=1.0)
        res = run_protocol(np.zeros(4), [0, 0, 1], p)
        # shares, task, shutdown to each worker; replies to the first two
        assert res.counts.messages == 3 * 3 + 2 * 3
        assert res.counts.bytes == res.transcript.bytes_total
        assert res.counts.worker_flops == 3 * 8 * 2 * 4

    def test_degree_mismatch(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1.0, r=1.0)
        with pytest.raises(InvalidArgumentError):
            run_protocol(0.5, [0, 1], p)

    def test_transport_size_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            Master(ProtocolParams(N=4, t=1, D=1, sigma_n=1.0), InProcessTransport(3))

    def test_lr_product(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(20, 5))
        w = rng.uniform(-1, 1, size=5)
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1e3, r=1.0)
        res = run_protocol((X, w), "lr-product", p, rng=rng)
        np.testing.assert_allclose(res.real, X.T @ (X @ w), rtol=0, atol=1e-4)

    def test_lr_product_zero_noise_exact(self):
        X = np.arange(12.0).reshape(4, 3) / 12
        w = np.array([0.5, -0.25, 1.0])
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1.0, r=1.0)
        res = run_protocol((X, w), "lr-product", p, noise=(NoiseDraw.zeros(1, (4, 3)), NoiseDraw.zeros(1, 3)))
        np.testing.assert_array_equal(res.real, X.T @ (X @ w))

    @pytest.mark.parametrize("N,t,D", [(2, 1, 1), (4, 1, 3), (7, 2, 3), (5, 2, 2)])
    def test_transparency(self, N, t, D):
        p = ProtocolParams(N=N, t=t, D=D, sigma_n=1e4, r=1.0)
        rng = np.random.default_rng(N * 10 + D)
        master = Master(p, rng=rng)
        for _ in range(200):
            coeffs = list(rng.uniform(-1, 1, size=D + 1))
            s = float(rng.uniform(-1, 1))
            res = master.evaluate_polynomial(s, coeffs)
            plain = np.polynomial.polynomial.polyval(s, coeffs)
            assert abs(res.real - plain) <= res.error_bound
        master.shutdown()


class _JitteredTransport(InProcessTransport):
    """Workers answer after random delays, so arrival order varies."""

    def roundtrip(self, server_index, blob):
        time.sleep(random.uniform(0, 0.01))
        return super().roundtrip(server_index, blob)


class _CorruptingTransport(InProcessTransport):
    def roundtrip(self, server_index, blob):
        reply = super().roundtrip(server_index, blob)
        if server_index == 2 and reply:
            reply = bytearray(reply)
            reply[-1] ^= 0x55
            reply = bytes(reply)
        return reply


class TestFailures:
    def test_killed_worker(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1.0, r=1.0)
        transport = InProcessTransport(4)
        master = Master(p, transport)
        master.share("s", np.ones(3))
        transport.kill(3)
        with pytest.raises(ProtocolFailureError) as info:
            master.run_task(polynomial_task([0, 0, 0, 1], master.digest, (3,)))
        transcript = info.value.transcript
        assert transcript is not None
        # 4 share messages + 4 replies + 4 task messages + 3 replies
        assert transcript.message_count == 15
        assert [e.server_index for e in transcript.entries if e.direction == TO_MASTER][-3:] == [1, 2, 4]

    def test_checksum_failure(self):
        p = ProtocolParams(N=3, t=1, D=1, sigma_n=1.0, r=1.0)
        with pytest.raises(TransportError):
            run_protocol(0.5, [0, 1], p, transport=_CorruptingTransport(3))

    def test_arrival_order_irrelevant(self):
        p = ProtocolParams(N=6, t=2, D=2, sigma_n=1e3, r=1.0)
        s = np.linspace(-1, 1, 11)
        a = run_protocol(s, [1, 2, 3], p, transport=_JitteredTransport(6), rng=np.random.default_rng(5))
        b = run_protocol(s, [1, 2, 3], p, rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a.value, b.value)
        assert [e.server_index for e in a.transcript.entries] == [e.server_index for e in b.transcript.entries]


class TestIsolation:
    def test_transcript_scan(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1e2, r=1.0)
        rng = np.random.default_rng(7)
        secret = rng.uniform(-1, 1, size=16)
        master = Master(p, rng=np.random.default_rng(8), keep_payloads=True)
        noise = NoiseDraw(np.random.default_rng(9).normal(size=(1, 16)) * 10 + 0j)
        shares = master.share("s", secret, noise)
        master.run_task(polynomial_task([0, 0, 0, 1], master.digest, (16,)))
        secret_bytes = secret.astype("<c16").tobytes()
        noise_bytes = noise.coeffs[0].astype("<c16").tobytes()
        share_bytes = {i: shares.for_server(i).shares[0].astype("<c16").tobytes() for i in range(1, 5)}
        for i in range(1, 5):
            seen = b"".join(e.payload for e in master.transcript.for_server(i))
            assert secret_bytes not in seen
            assert noise_bytes not in seen
            # individual values, not only the whole vector
            assert not any(secret_bytes[k:k + 16] in seen for k in range(0, len(secret_bytes), 16))
            for j in range(1, 5):
                assert (share_bytes[j] in seen) == (i == j)
            inbound = [e for e in master.transcript.for_server(i)
                       if e.direction == TO_WORKER and e.kind == MessageKind.SHARES.name]
            slot, got = unpack_shares(inbound[0].payload, i)
            np.testing.assert_array_equal(got.shares, shares.for_server(i).shares)
        assert all(e.direction in (TO_WORKER, TO_MASTER) for e in master.transcript.entries)


@pytest.mark.socket
class TestSocketTransport:
    def test_bit_identical_to_in_process(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1e3, r=1.0)
        X = np.random.default_rng(0).uniform(0, 1, size=(30, 6))
        w = np.linspace(-1, 1, 6)
        local = run_protocol((X, w), "lr-product", p, rng=np.random.default_rng(42))
        with local_worker_processes(4) as procs:
            with SocketTransport([addr for _, addr in procs], timeout=30) as transport:
                remote = run_protocol((X, w), "lr-product", p, transport=transport, rng=np.random.default_rng(42))
        np.testing.assert_array_equal(remote.value, local.value)
        assert remote.counts.bytes == local.counts.bytes

    def test_polynomial_over_sockets(self):
        p = ProtocolParams(N=4, t=1, D=3, sigma_n=1e3, r=2.0)
        with local_worker_processes(4) as procs:
            with SocketTransport([addr for _, addr in procs]) as transport:
                res = run_protocol(1.5, [0, -1, 0, 1], p, transport=transport, rng=np.random.default_rng(3))
        assert abs(res.real - 1.875) <= res.error_bound

    def test_dead_worker_process(self):
        p = ProtocolParams(N=2, t=1, D=1, sigma_n=1.0, r=1.0)
        with local_worker_processes(2) as procs:
            with SocketTransport([addr for _, addr in procs], timeout=5) as transport:
                master = Master(p, transport)
                master.share("s", np.ones(2))
                procs[1][0].kill()
                procs[1][0].wait()
                with pytest.raises(ProtocolFailureError):
                    master.run_task(polynomial_task([0, 1], master.digest, (2,)))

    def test_unreachable(self):
        with pytest.raises(TransportError):
            SocketTransport([("127.0.0.1", 1)], timeout=1)


def test_task_spec_used_by_master_is_serializable():
    p = ProtocolParams(N=4, t=1, D=3, sigma_n=1.0)
    task = lr_task(p.digest(), 3)
    assert TaskSpec.from_bytes(task.to_bytes()) == task
