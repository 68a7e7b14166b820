"""Which weight families admit attractive multi-jump dynamics.

For the family with pi(n) built from the ratio (1 + b/n), a scalar diagnostic
F_b(alpha) must stay nonnegative.  Scanning alpha shows where it turns negative;
the general tail-sum check agrees at every cutoff.
"""
from fractions import Fraction as F

from mmp.attractiveness import check_attractiveness, ex4_ratio, f_diagnostic
from mmp.rates import ex4_pi, make_builtin

for b in (F(1), F(3, 2), F(2), F(3), F(5)):
    vals = f_diagnostic(ex4_ratio(b), 40)
    neg = [a for a, v in vals.items() if v < 0]
    first = neg[0] if neg else None
    print(f"b={str(b):>4}: F(2)={vals[2]}, first negative alpha: {first}")

F2 = f_diagnostic(ex4_ratio(2), 12)
print("b=2 near the sign change:", {a: str(F2[a]) for a in (8, 9, 10, 11)})

for cutoff in (8, 9, 10, 12):
    v = check_attractiveness(make_builtin("ex3_pi_h", {"pi": ex4_pi(2)}), cutoff)
    print(f"tail-sum check at cutoff {cutoff}: attractive={v.passed}", v.witness or "")

print()
for h in ("inv", "k_then_inv:3"):
    v = check_attractiveness(make_builtin("ex1_h", {"h": h}))
    print(f"h={h}: attractive={v.passed}", v.witness or "")
