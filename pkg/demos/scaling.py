"""Monte Carlo success rate and budget of the one-known pipeline as r grows.

Run with ``python3 demos/scaling.py [trials]``. Writes CSV to standard output.
"""

import sys

from distcluster.harness import ExperimentConfig, expand_grid, rows_to_csv, sweep_rows

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20
base = ExperimentConfig(variant="one-known", n=10**4, k=20, eps=0.45, trials=trials, seed=7)
rows = sweep_rows(expand_grid(base, {"r": [1, 2, 4, 8]}))
sys.stdout.write(rows_to_csv(rows))
for row in rows:
    print(f"r={row['r']}: success {float(row['success_rate']):.2f}, mean budget {float(row['mean_budget']):.3g}",
          file=sys.stderr)
