import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from analog_shards.errors import FormatError
from analog_shards.shareio import shares_from_bytes, shares_from_json, shares_to_bytes, shares_to_json
from analog_shards.sharing import ProtocolParams, ShareSet, share_secret

DIGEST = bytes(range(32))


def sample(shape=(3,), n=4):
    p = ProtocolParams(N=n, t=1, D=1, sigma_n=1.0, r=10.0)
    return share_secret(np.ones(shape), p, np.random.default_rng(0))


class TestBinary:
    @pytest.mark.parametrize("shape", [(), (5,), (2, 3)])
    def test_roundtrip_bit_exact(self, shape):
        ss = sample(shape)
        back = shares_from_bytes(shares_to_bytes(ss))
        np.testing.assert_array_equal(back.shares, ss.shares)
        assert back.params_digest == ss.params_digest
        assert back.shape == ss.shape

    def test_layout(self):
        ss = ShareSet(np.array([[1 + 2j], [3 - 4j]]), DIGEST)
        blob = shares_to_bytes(ss)
        assert blob[:4] == b"ASHR"
        assert struct.unpack(">HB", blob[4:7]) == (1, 1)
        assert struct.unpack(">Q", blob[7:15]) == (1,)
        assert struct.unpack(">I", blob[15:19]) == (2,)
        assert blob[19:51] == DIGEST
        assert struct.unpack("<4d", blob[51:]) == (1.0, 2.0, 3.0, -4.0)

    def test_special_values_survive(self):
        ss = ShareSet(np.array([[complex(np.inf, -0.0), complex(5e-324, np.nan)]]), DIGEST)
        back = shares_from_bytes(shares_to_bytes(ss))
        assert back.shares.tobytes() == ss.shares.tobytes()

    def test_bad_magic(self):
        blob = bytearray(shares_to_bytes(sample()))
        blob[:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic"):
            shares_from_bytes(bytes(blob))

    def test_bad_version(self):
        blob = bytearray(shares_to_bytes(sample()))
        blob[4:6] = struct.pack(">H", 9)
        with pytest.raises(FormatError, match="version"):
            shares_from_bytes(bytes(blob))

    @pytest.mark.parametrize("cut", [2, 10, 40, 60])
    def test_truncated(self, cut):
        with pytest.raises(FormatError):
            shares_from_bytes(shares_to_bytes(sample())[:cut])

    def test_trailing_bytes(self):
        with pytest.raises(FormatError, match="length"):
            shares_from_bytes(shares_to_bytes(sample()) + b"\0")


class TestJSON:
    def test_roundtrip(self):
        ss = sample((2, 2))
        back = shares_from_json(shares_to_json(ss))
        np.testing.assert_array_equal(back.shares, ss.shares)
        assert back.params_digest == ss.params_digest

    def test_malformed(self):
        with pytest.raises(FormatError):
            shares_from_json('{"magic": "ASHR"}')
        with pytest.raises(FormatError):
            shares_from_json("not json")


@settings(max_examples=50, deadline=None)
@given(arrays(np.complex128, st.tuples(st.integers(1, 5), st.integers(0, 4))))
def test_binary_roundtrip_property(values):
    ss = ShareSet(values, DIGEST)
    assert shares_from_bytes(shares_to_bytes(ss)).shares.tobytes() == values.tobytes()
