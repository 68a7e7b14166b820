"""Coupled jump rates G^{k,l} for two copies of a mass migration process.

Reading Sigma^{k-1} - Sigma^k = g^k as the length of the interval
[Sigma^k, Sigma^{k-1}), G^{k,l} is the overlap of the k-th interval of the
first copy with the l-th interval of the second (index 0 standing for
[Sigma^0, infinity)).  Three independent evaluations are provided: the
closed min-formula, per-l set membership, and the extremal-index case tree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .attractiveness import TailTable, check_attractiveness
from .rates import Number, ProcessClass, RateFamily

LABELS = ("L1", "L2*", "L3", "L4*", "L5*", "L6", "boundary")


@dataclass
class CouplingTable:
    quad: tuple
    G: dict  # (k, l) -> value
    labels: dict = field(default_factory=dict)  # (k, l) -> label
    method: str = "MinFormula"

    def __call__(self, k: int, l: int) -> Number:
        return self.G.get((k, l), Fraction(0))

    def records(self):
        return [(k, l, v, self.labels.get((k, l), "")) for (k, l), v in sorted(self.G.items())]


def _mn(x, y):
    return x if x <= y else y


def min_formula(family: RateFamily, quad: tuple, S: Optional[TailTable] = None) -> CouplingTable:
    a, b, c, d = quad
    S = S or TailTable(family, max(quad))
    g = family
    G = {}
    if a == 0:
        for l in range(1, c + 1):
            G[(0, l)] = g(l, c, d)
        return CouplingTable(quad, G, {}, "MinFormula")
    if c == 0:
        for k in range(1, a + 1):
            G[(k, 0)] = g(k, a, b)
        return CouplingTable(quad, G, {}, "MinFormula")
    for k in range(1, a + 1):
        gk, Sk = g(k, a, b), S(k, a, b)
        for l in range(1, c + 1):
            gl, Sl = g(l, c, d), S(l, c, d)
            G[(k, l)] = _mn(gk - _mn(gk, Sl - _mn(Sl, Sk)), gl - _mn(gl, Sk - _mn(Sl, Sk)))
        S0 = S(0, c, d)
        G[(k, 0)] = gk - _mn(gk, S0 - _mn(S0, Sk))
    S0 = S(0, a, b)
    for l in range(1, c + 1):
        gl, Sl = g(l, c, d), S(l, c, d)
        G[(0, l)] = gl - _mn(gl, S0 - _mn(S0, Sl))
    return CouplingTable(quad, G, {}, "MinFormula")


def _value(label, k, l, gk, gl, Skm1, Sk, Tl, Tlm1):
    if label in ("L1", "L6"):
        return Fraction(0)
    if label == "L2*":
        return Skm1 - Tl
    if label == "L3":
        return gl
    if label == "L4*":
        return gk
    return Tlm1 - Sk  # L5*


def label_by_membership(k: int, l: int, S, T) -> Optional[str]:
    """Label of l for fixed k by testing the set definitions directly.

    S(j) and T(j) are the tails of the two copies; index -1 means +infinity.
    Returns None for (0, 0), which belongs to no set.
    """
    Sk, Tl = S(k), T(l)
    Skm1 = S(k - 1) if k > 0 else None
    Tlm1 = T(l - 1) if l > 0 else None
    hits = []
    if k > 0 and Skm1 <= Tl:
        hits.append("L1")
    if k > 0 and (l == 0 or Skm1 <= Tlm1) and Sk <= Tl < Skm1:
        hits.append("L2*")
    if l > 0 and (k == 0 or Tlm1 < Skm1) and Sk <= Tl:
        hits.append("L3")
    if k > 0 and (l == 0 or Skm1 <= Tlm1) and Tl < Sk:
        hits.append("L4*")
    if l > 0 and (k == 0 or Tlm1 < Skm1) and Tl < Sk <= Tlm1:
        hits.append("L5*")
    if l > 0 and Tlm1 < Sk:
        hits.append("L6")
    if len(hits) > 1:
        raise AssertionError(f"sets overlap at k={k}, l={l}: {hits}")
    return hits[0] if hits else None


def labels_by_case_tree(k: int, c: int, S, T) -> dict:
    """Partition of {0..c} (of {1..c} when k = 0) following the extremal indices."""
    out = {}

    def put(label, ls):
        for l in ls:
            out[l] = label

    Sk = S(k)
    lo = 0 if k > 0 else 1
    if Sk == 0:
        if k == 0:
            put("L3", range(1, c + 1))
            return out
        Skm1 = S(k - 1)
        if Skm1 == 0:
            put("L1", range(0, c + 1))
            return out
        # m = l3 - 1: first l with T(l) < Sigma^{k-1}; exists since T(c) = 0
        m = next(l for l in range(0, c + 1) if T(l) < Skm1)
        put("L1", range(0, m))
        put("L2*", [m])
        put("L3", range(m + 1, c + 1))
        return out
    Tlast = T(c - 1)
    if Tlast < Sk:
        l6 = next(l for l in range(1, c + 1) if T(l - 1) < Sk)
        put("L6", range(l6, c + 1))
        if k == 0:
            if l6 > 1:
                put("L5*", [l6 - 1])
            put("L3", range(1, l6 - 1))
            return out
        if l6 == 1:
            put("L4*", [0])
            return out
        Skm1 = S(k - 1)
        l = l6 - 1
        if l == 0 or Skm1 <= T(l - 1):
            put("L4*", [l])
            put("L1", range(0, l))
            return out
        put("L5*", [l])
        m = next(j for j in range(0, l) if T(j) < Skm1)
        put("L1", range(0, m))
        put("L2*", [m])
        put("L3", range(m + 1, l))
        return out
    # Sigma^k <= T(c-1): c lies in L4* or L5*
    if k == 0:
        put("L5*", [c])
        put("L3", range(1, c))
        return out
    Skm1 = S(k - 1)
    if Tlast < Skm1:
        put("L5*", [c])
        m = next(j for j in range(0, c) if T(j) < Skm1)
        put("L1", range(0, m))
        put("L2*", [m])
        put("L3", range(m + 1, c))
        return out
    put("L4*", [c])
    put("L1", range(0, c))
    return out


def explicit_partition(family: RateFamily, quad: tuple, S: Optional[TailTable] = None,
                       path: str = "case_tree") -> CouplingTable:
    a, b, c, d = quad
    S = S or TailTable(family, max(quad))
    g = family
    G, labels = {}, {}
    if a == 0:
        for l in range(1, c + 1):
            G[(0, l)] = g(l, c, d)
            labels[(0, l)] = "boundary"
        return CouplingTable(quad, G, labels, "ExplicitPartition")
    if c == 0:
        for k in range(1, a + 1):
            G[(k, 0)] = g(k, a, b)
            labels[(k, 0)] = "boundary"
        return CouplingTable(quad, G, labels, "ExplicitPartition")
    Sf = lambda j: S(j, a, b)
    Tf = lambda j: S(j, c, d)
    for k in range(0, a + 1):
        if path == "case_tree":
            lab = labels_by_case_tree(k, c, Sf, Tf)
        else:
            lab = {}
            for l in range(0, c + 1):
                x = label_by_membership(k, l, Sf, Tf)
                if x is not None:
                    lab[l] = x
        expected = set(range(0 if k > 0 else 1, c + 1))
        if set(lab) != expected:
            raise AssertionError(f"labels do not partition at quad={quad}, k={k}: {sorted(lab)}")
        for star in ("L2*", "L4*", "L5*"):
            if sum(1 for v in lab.values() if v == star) > 1:
                raise AssertionError(f"{star} not a singleton at quad={quad}, k={k}")
        gk = g(k, a, b) if k else None
        Skm1 = Sf(k - 1) if k else None
        for l, label in lab.items():
            gl = g(l, c, d) if l else None
            Tlm1 = Tf(l - 1) if l else None
            G[(k, l)] = _value(label, k, l, gk, gl, Skm1, Sf(k), Tf(l), Tlm1)
            labels[(k, l)] = label
    return CouplingTable(quad, G, labels, "ExplicitPartition")


def coupling_table(family: RateFamily, quad: tuple, method: str = "MinFormula",
                   S: Optional[TailTable] = None) -> CouplingTable:
    if any(x < 0 for x in quad):
        raise ValueError("occupancies must be nonnegative")
    if method == "MinFormula":
        return min_formula(family, quad, S)
    if method == "ExplicitPartition":
        return explicit_partition(family, quad, S, "case_tree")
    if method == "Membership":
        return explicit_partition(family, quad, S, "membership")
    raise ValueError(f"unknown method {method!r}")


def _nonzero(table: CouplingTable) -> dict:
    return {kl: v for kl, v in table.G.items() if v != 0}


@dataclass
class CouplingReport:
    passed: bool
    quads_checked: int
    C: Number
    failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)


def verify_coupling(family: RateFamily, quad_cutoff: int, C: Number,
                    stop_at_first: bool = False) -> CouplingReport:
    S = TailTable(family, quad_cutoff)
    g = family
    attractive = (family.kind in (ProcessClass.MMZRP, ProcessClass.MMTP, ProcessClass.SINGLE_ZRP,
                                  ProcessClass.SINGLE_TP)
                  and check_attractiveness(family, quad_cutoff).passed)
    counts = dict.fromkeys(["marginals", "key_inequality", "staircase", "methods_agree",
                            "ordered_pairs", "order_preserving"], 0)
    failures = []
    n = 0

    def fail(check, quad, entry=None, info=None):
        failures.append({"check": check, "quad": quad, "entry": entry, "info": info})

    rng = range(quad_cutoff + 1)
    for quad in itertools.product(rng, rng, rng, rng):
        if stop_at_first and failures:
            break
        a, b, c, d = quad
        n += 1
        T1 = min_formula(family, quad, S)
        T2 = explicit_partition(family, quad, S, "case_tree")
        T3 = explicit_partition(family, quad, S, "membership")
        G = T1.G
        if any(v < 0 for v in G.values()):
            fail("nonnegative", quad)
        # (i) marginals
        ok = True
        for k in range(1, a + 1):
            if sum((G.get((k, l), 0) for l in range(0, c + 1)), Fraction(0)) != g(k, a, b):
                ok = False
                fail("marginals", quad, (k, "*"))
        for l in range(1, c + 1):
            if sum((G.get((k, l), 0) for k in range(0, a + 1)), Fraction(0)) != g(l, c, d):
                ok = False
                fail("marginals", quad, ("*", l))
        counts["marginals"] += ok
        # (ii) key inequality
        lhs = sum((abs(k - l) * v for (k, l), v in G.items()), Fraction(0))
        if lhs <= 2 * C * (abs(a - c) + abs(b - d)):
            counts["key_inequality"] += 1
        else:
            fail("key_inequality", quad, None, {"lhs": lhs})
        # (iii) staircase
        sums = [k + l for (k, l), v in G.items() if v > 0]
        if len(sums) == len(set(sums)):
            counts["staircase"] += 1
        else:
            fail("staircase", quad)
        # (iv) method agreement
        if _nonzero(T1) == _nonzero(T2) == _nonzero(T3) and T2.labels == T3.labels:
            counts["methods_agree"] += 1
        else:
            fail("methods_agree", quad)
        # (v) ordered pairs of attractive MM-ZRP / MM-TP with g^1 > 0
        if attractive and 1 <= a <= c and b >= d and g(1, c, d) > 0:
            counts["ordered_pairs"] += 1
            S0a, S0c, S1c = S(0, a, b), S(0, c, d), S(1, c, d)
            if G.get((1, 0), 0) != 0:
                fail("ordered_pairs", quad, (1, 0))
            elif S0a == S0c and G.get((1, 1), 0) != g(1, c, d):
                fail("ordered_pairs", quad, (1, 1))
            elif S0a < S0c and G.get((0, 1), 0) != S0c - max(S0a, S1c):
                fail("ordered_pairs", quad, (0, 1))
        # order preservation for a single transition
        if attractive and a <= c and b <= d:
            bad = [(k, l) for (k, l), v in G.items() if v > 0 and not (a - k <= c - l and b + k <= d + l)]
            if bad:
                fail("order_preserving", quad, bad[0])
            else:
                counts["order_preserving"] += 1
    return CouplingReport(not failures, n, C, failures, counts)
