"""Condensation in the canonical ensemble.

With w(n) = prod_{i<=n} (1 + b/i)^-1 and b > 2 the critical density is finite.
Above it, the site marginal splits into a background close to the critical
grand-canonical law plus one site holding the excess.  At fixed volume and
growing N, all but the largest site look like independent draws.
"""
from fractions import Fraction as F

import numpy as np

from mmp.condensation import build_canonical, canonical_marginal, fixed_volume_test, max_site_law, thermodynamic_test
from mmp.measures import critical_profile, ex4_marginal, tilt_and_partition

w = ex4_marginal(4)
prof = critical_profile(w)
print(f"b=4: phi_c={prof.phi_c}, rho_c={prof.rho_c}")
for b in (F(3, 2), F(2)):
    print(f"b={b}: probability of an empty site at phi_c = {tilt_and_partition(ex4_marginal(b), 1).pmf(0)}")

t = thermodynamic_test(w, 2, [10, 20, 40])
for (L, tv) in t.rows:
    print(f"rho=2 L={L}: TV to critical law {tv:.4f}, max-site mode {t.extra['max_site_mode'][L]}"
          f" (excess {t.extra['condensate_target'][L]:g})")

ens = build_canonical(w, 40, 80)
law = max_site_law(ens)
print("largest site: mean", round(float(np.dot(np.arange(len(law)), law)), 2), "of 80 particles")
m = canonical_marginal(ens, 1)
print("single site P(n) for n=0..4:", np.round(np.asarray(m[:5], dtype=float), 4))

fv = fixed_volume_test(ex4_marginal(F(3, 2)), 3, [100, 300, 1000, 2000])
print("fixed volume L=3:", ", ".join(f"N={n}: {v:.4f}" for n, v in fv.rows))
