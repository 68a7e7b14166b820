"""Inspect the increasing coupling of two multi-jump departures.

For a pair of sites (a, b) and (c, d) the coupling table G(k, l) gives the rate
at which the first system moves k particles while the second moves l.  Rows and
columns sum to the original rates, and each total k + l appears at most once.
"""
from mmp.coupling import coupling_table, verify_coupling
from mmp.rates import check_growth, make_builtin

fam = make_builtin("ex1_h", {"h": "inv"})
quad = (3, 0, 5, 0)
t = coupling_table(fam, quad, "ExplicitPartition")
print(f"coupling for occupancies {quad[0]} and {quad[2]}:")
for k in range(quad[0] + 1):
    row = [t(k, l) for l in range(quad[2] + 1)]
    print(f"  k={k}: " + " ".join(f"{str(x):>6}" for x in row))

print("labels of positive entries:", {kl: t.labels[kl] for kl, v in t.G.items() if v and kl in t.labels})

C = check_growth(fam, "LipschitzJump", scan_cutoff=5).best_constant
rep = verify_coupling(fam, 5, C)
print(f"verified {rep.quads_checked} quads with C={C}: passed={rep.passed}")
print("check counts:", rep.checks)
