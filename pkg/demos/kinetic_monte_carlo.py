"""Continuous-time simulation on a ring, and coupled runs.

With h(k) = 1/k the product measure is geometric, so at density 1/2 the
single-site histogram should approach geometric weights with ratio 1/3.
A coupled pair started in order stays in order for the attractive rates and
loses it for the variant with h(k) = k below 3.
"""
from fractions import Fraction as F

import numpy as np

from mmp.lattice import Kernel
from mmp.measures import geometric
from mmp.rates import make_builtin
from mmp.simulator import build_system, run_replicas, simulate_coupled

ring = Kernel.totally_asymmetric(1)
good = make_builtin("ex1_h", {"h": "inv"})
bad = make_builtin("ex1_h", {"h": "k_then_inv:3"})

rep = run_replicas(good, ring, 64, master_seed=1, replicas=4, events=500_000, burn_in=100_000,
                   target=geometric(F(1, 3), truncation=256), N=32)
print("histogram 0..5:", np.round(rep.histogram[:6], 4))
print("geometric 0..5:", np.round([(2 / 3) * (1 / 3) ** n for n in range(6)], 4))
print(f"TV = {rep.tv:.4f}")

rng = np.random.default_rng(0)
low = rng.integers(0, 3, 32)
high = low + rng.integers(0, 2, 32)
for name, fam in (("attractive", good), ("non-attractive", bad)):
    pair = [build_system(fam, ring, 32, init="deterministic", occupancy=o, seed=5) for o in (low, high)]
    out = simulate_coupled(pair, 100_000)
    print(f"{name}: {out.order_violations} order violations in 100000 events")
