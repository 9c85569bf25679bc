"""Train a 3-vs-7 MNIST classifier on secret-shared data.

The analog trainer hides the images and the weights from every single worker.
It is compared with plain training and with a finite-field baseline, which
breaks once the dataset grows past what its field can represent.

Needs the MNIST IDX files in $ANALOG_SHARDS_MNIST (default /root/data/mnist).
Takes about a minute.
"""
import os

import numpy as np

from analog_shards.learning.experiments import compare, privacy_accounting
from analog_shards.learning.fixed_point import FixedPointConfig, overflow_threshold
from analog_shards.learning.mnist import DATA_ENV, DEFAULT_DATA_DIR, filter_binary, load_mnist_split
from analog_shards.learning.training import TrainingConfig
from analog_shards.sharing import ProtocolParams

data_dir = os.environ.get(DATA_ENV, DEFAULT_DATA_DIR)
pool = filter_binary(load_mnist_split("train", data_dir), 3, 7, scale="raw")
test = filter_binary(load_mnist_split("test", data_dir), 3, 7, scale="raw")
print(f"{pool.m} training and {test.m} test images of 3s and 7s")

params = ProtocolParams(N=4, t=1, D=3, sigma_n=1e5, alpha=10.0, r=255.0)
analog = TrainingConfig(beta=1e-6, k=15, params=params, sigmoid_mode="degree1")
central = TrainingConfig(beta=1e-6, k=15, sigmoid_mode="exact")
fixed = TrainingConfig(beta=1e-6, k=15, sigmoid_mode="degree1")
fxp = FixedPointConfig(frac_bits=14)

threshold = overflow_threshold(pool, fixed, fxp)
print(f"the fixed-point field overflows beyond about {threshold:.0f} samples")

sizes = (100, 200, 1000, 2000)
result = compare(pool, test, sizes, repeats=5, analog=analog, centralized=central, fixed=fixed, fxp=fxp)
print("\nfinal test accuracy (mean of 5 draws)")
print("samples   analog   centralized   fixed-point")
for n in sizes:
    print(f"{n:7d}   {result.final_mean(n, 'analog'):.3f}    {result.final_mean(n, 'centralized'):.3f}"
          f"         {result.final_mean(n, 'fixed-point'):.3f}")

acc = privacy_accounting(params, analog.k)
print(f"\nper-iteration distinguishing bound {acc['dataset_eta_s']:.2e}, "
      f"over {analog.k} iterations {acc['model_eta_s']:.2e}")
print("messages between workers:", result.inter_worker["analog"])
print("mean messages per analog run:", np.round(result.counts["analog"]["messages"]))
