"""Hide a number in noise, compute on the shares, and decode the result.

Run with ``python demos/01_share_and_compute.py``.
"""
import numpy as np

from analog_shards.accuracy import accuracy_bound
from analog_shards.runtime import InProcessTransport, run_protocol
from analog_shards.sharing import ProtocolParams, decode_real, decoder_weights, share_secret

rng = np.random.default_rng(7)

# Three servers, one of which may be curious. Secrets live in [-10, 10] and the
# noise standard deviation is a thousand times larger.
params = ProtocolParams(N=3, t=1, D=2, sigma_n=1e4, r=10.0)
secret = 2.5

shares = share_secret(secret, params, rng)
print("secret:", secret)
for i in range(1, params.N + 1):
    print(f"  server {i} holds {shares.share(i):.3f}")

# Every share alone looks like noise. Averaging all of them cancels the noise
# exactly, because the evaluation points are the N-th roots of unity.
plain = decode_real(shares.shares, decoder_weights(params, d=1))
print(f"decoded without computing: {plain.value:.15f} (residue {plain.residue:.1e})")

# Now ask every server to evaluate f(x) = 1 + x^2 on its share.
coeffs = [1.0, 0.0, 1.0]
result = run_protocol(secret, coeffs, params, InProcessTransport(params.N), rng)
bound = accuracy_bound(1.0, params).delta_f
print(f"f(secret) decoded: {result.real:.12f}, exact {1 + secret**2}")
print(f"  error {abs(result.real - (1 + secret**2)):.2e}, guaranteed at most {bound:.2e}")
print(f"  {result.counts.messages} messages, {result.counts.bytes} bytes on the wire")
