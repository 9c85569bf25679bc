"""How much the noise level buys in privacy and costs in accuracy.

Larger noise makes each share less informative about the secret but amplifies
floating-point error in the decoded value. This script tabulates both sides and
checks the single-server bounds against numerically exact leakage.
"""
import numpy as np

from analog_shards.accuracy import tradeoff_table
from analog_shards.privacy import (
    ds_bound_single,
    mi_oracle_single,
    mis_bound_single,
    privacy_report,
    tv_oracle_single,
)
from analog_shards.sharing import ProtocolParams

template = ProtocolParams(N=2, t=1, D=1, sigma_n=1.0, alpha=10.0, r=255.0)
print("sigma_n     log10(accuracy bound)  log10(distinguishing bound)")
for row in tradeoff_table([1e5, 1e10, 1e15], template):
    print(f"{row.sigma_n:8.0e}   {row.log10_delta_f:20.3f}  {row.log10_eta_s:26.3f}")

print()
print("bound versus exact leakage for one server, as r/sigma shrinks")
print("r/sigma     TV exact    TV bound    MI exact    MI bound")
for ratio in np.logspace(-3, 0, 4):
    print(f"{ratio:7.0e}  {tv_oracle_single(ratio, 1):10.3e}  {ds_bound_single(ratio, 1):10.3e}"
          f"  {mi_oracle_single(ratio, 1):10.3e}  {mis_bound_single(ratio, 1):10.3e}")

print()
report = privacy_report(255.0, 1e5, t=3, alpha=10.0)
print("report for three colluding servers at sigma = 1e5:")
for key, value in report.to_dict().items():
    print(f"  {key}: {value}")
