"""How the size of the set of feasible solutions changes with rank.

Anchored (separable) data give a unique factorization at the true rank;
a dense truth does not. The scan fits each rank once and reruns the
sampler for several beta values.

    python demos/sfs_size_by_rank.py
"""

import numpy as np

from nmfsfs import SamplerConfig
from nmfsfs.experiments import dense_factors, rank_scan, separable_factors

rng = np.random.default_rng(7)
K, G, N = 96, 24, 4
sampler = SamplerConfig(check_every=500)

for name, truth in (("separable", separable_factors(K, G, N, rng)),
                    ("dense", dense_factors(K, G, N, rng))):
    M = rng.poisson(truth.product()).astype(float)
    # at the true rank start from the truth itself, other ranks are fitted
    scan = rank_scan(M, range(2, 7), beta_set=(0.5, 1.0), repeats=5, seed=1,
                     fit_config={"n_inits": 5, "max_iter": 3000},
                     sampler_config=sampler, factorizations={N: truth})
    print(f"\n{name} truth, N = {N}")
    print("  N  beta   mean size    q25        q75        sweeps")
    for row in scan.summary():
        print(f"  {row['N']}  {row['beta']:.1f}  {row['size_mean']:.3e}  {row['size_q25']:.3e}  "
              f"{row['size_q75']:.3e}  {row['iter_mean']:.0f}")
