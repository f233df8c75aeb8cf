"""Compress what clients send with a Tucker model, then add Gaussian noise."""

import logging
import warnings

import numpy as np

from fedmvc.data import generate_synthetic, partition_clients
from fedmvc.federation import (FederationConfig, PrivacyParams, dense_payload_size,
                               gaussian_sigma, run_federation, tucker_payload_size)
from fedmvc.local import DegenerateClusterWarning, SolverConfig

# heavy noise routinely empties clusters; those messages are expected here
warnings.simplefilter("ignore", DegenerateClusterWarning)
logging.getLogger("fedmvc").setLevel(logging.ERROR)

# Wide views make the dense center statistics expensive; only small ranks beat them.
c, dims = 4, [50, 50, 50]
for r2, r3 in [(5, 2), (10, 3), (50, 3)]:
    print(f"ranks ({r2}, {r3}): {tucker_payload_size(c, 50, 3, r2, r3)} values per client, "
          f"dense {dense_payload_size(c, dims)}")

ds = generate_synthetic(240, 3, [3, 4, 5], separation=8.0, seed=4)
parts = partition_clients(ds, 4)

# Full ranks recover the partition; truncated ranks trade accuracy for size.
for ranks in [(5, 3), (3, 2)]:
    fed = FederationConfig(SolverConfig(c=3), mode="tensorized", ranks=ranks, rounds=10)
    last = run_federation(parts, fed).rounds[-1]
    print(f"tensorized {ranks}: mean ARI {np.mean(last['client_ARI']):.3f}, "
          f"{last['payload_elements'][0]} values per client")

# Noise grows as epsilon shrinks and the recovered partition degrades with it.
for eps in [50.0, 5.0, 1.0]:
    priv = PrivacyParams(True, eps, 1e-5, clip_norm=1.0, seed=1)
    fed = FederationConfig(SolverConfig(c=3), rounds=10, privacy=priv)
    last = run_federation(parts, fed).rounds[-1]
    print(f"epsilon {eps:5.1f}: sigma {gaussian_sigma(priv):7.3f}, "
          f"mean ARI {np.mean(last['client_ARI']):.3f}")
