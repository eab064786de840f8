"""Cluster 20 distributions on a 10^4-element domain, one group known to be uniform.

Run with ``python3 demos/quickstart.py``.
"""

import numpy as np

from distcluster import Pmf, cluster_one_known, make_instance, make_paninski

n, k, r, eps = 10**4, 20, 4, 0.45
uniform = Pmf.uniform(n)
far = make_paninski(n, eps, seed=0)
inst = make_instance(n, k, r, uniform, far, seed=1, eps=eps)

res = cluster_one_known(uniform, inst, n, k, eps, r, rng=np.random.default_rng(2))
print("partition:", "".join(res.partition.side_of))
print("correct:  ", inst.is_correct(res.partition))
print("samples:  ", res.samples, "over", inst.rounds, "adaptive rounds")
per = inst.ledger().per_oracle
print("per-oracle draws: min", min(per), "max", max(per))
