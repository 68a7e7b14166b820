"""Product invariant measures: the A matrix, invariance conditions, rate
construction from a prescribed marginal, and exact stationarity on small tori."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional

from .lattice import Kernel
from .measures import Marginal, from_function
from .rates import Number, ProcessClass, RateFamily
from .verdict import Verdict

STATE_GUARD = 2_000_000


class GuardExceeded(RuntimeError):
    def __init__(self, guard: str, value, limit):
        super().__init__(f"guard {guard} exceeded: {value} > {limit}")
        self.guard = guard


@dataclass
class AMatrix:
    grid: list  # grid[a][b]
    mu: Marginal
    family: RateFamily
    cutoff: int
    psi: list

    def __call__(self, a: int, b: int) -> Number:
        return self.grid[a][b]

    def to_text(self) -> str:
        return "\n".join(" ".join(str(v) for v in row) for row in self.grid) + "\n"


def _positive_weights(mu: Marginal, upto: int) -> list:
    ws = [mu.weight(n) for n in range(upto + 1)]
    for n, w in enumerate(ws):
        if not w > 0:
            raise ValueError(f"zero weight at n={n}: only the positive-support regime is handled")
    return ws


def compute_A(family: RateFamily, mu: Marginal, cutoff: int) -> AMatrix:
    """A(a,b) = sum_{k<=b} g^k_{a+k,b-k} mu(a+k)mu(b-k)/(mu(a)mu(b)) - sum_{k<=a} g^k_{a,b}."""
    ws = _positive_weights(mu, 2 * cutoff)
    grid = []
    for a in range(cutoff + 1):
        row = []
        for b in range(cutoff + 1):
            inflow = sum((family(k, a + k, b - k) * ws[a + k] * ws[b - k] for k in range(1, b + 1)),
                         Fraction(0))
            val = inflow / (ws[a] * ws[b]) - sum((family(k, a, b) for k in range(1, a + 1)), Fraction(0))
            row.append(val)
        grid.append(row)
    psi = [grid[0][b] for b in range(cutoff + 1)]
    return AMatrix(grid, mu, family, cutoff, psi)


def check_product_invariance(A: AMatrix, kernel_symmetry: str, tol: float = 0) -> Verdict:
    n = A.cutoff + 1
    worst = 0
    witness = None
    if kernel_symmetry == "symmetric":
        for a in range(n):
            for b in range(a, n):
                r = abs(A.grid[a][b] + A.grid[b][a])
                if r > worst:
                    worst, witness = r, {"alpha": a, "beta": b}
        name = "antisymmetry"
    elif kernel_symmetry == "asymmetric":
        psi = A.psi
        for a in range(n):
            for b in range(n):
                r = abs(A.grid[a][b] - (psi[b] - psi[a]))
                if r > worst:
                    worst, witness = r, {"alpha": a, "beta": b}
        name = "psi-form"
    else:
        raise ValueError("kernel_symmetry must be 'symmetric' or 'asymmetric'")
    return Verdict(name, worst <= tol, A.cutoff, worst, witness if worst > tol else None,
                   {"psi": A.psi})


def check_single_jump_balance(family: RateFamily, mu: Marginal, cutoff: int) -> Verdict:
    g = lambda a, b: family(1, a, b)
    ws = _positive_weights(mu, cutoff + 1)
    sub = {}

    worst, wit = 0, None
    for a in range(cutoff + 1):
        for b in range(cutoff + 1):
            r = abs(g(a + 1, b) * ws[a + 1] * ws[b] - g(b + 1, a) * ws[b + 1] * ws[a])
            if r > worst:
                worst, wit = r, {"alpha": a, "beta": b}
    sub["detailed_balance"] = Verdict("detailed_balance", worst == 0, cutoff, worst, wit)

    worst, wit, zero = 0, None, None
    for a in range(cutoff + 1):
        for b in range(cutoff + 1):
            den = g(1, a) * g(b + 1, 0)
            if den == 0:
                zero = zero or {"alpha": a, "beta": b, "reason": "zero denominator"}
                continue
            r = abs(g(a + 1, b) - g(a + 1, 0) * g(1, b) * g(b + 1, a) / den)
            if r > worst:
                worst, wit = r, {"alpha": a, "beta": b}
    sub["compat"] = Verdict("compat", worst == 0 and zero is None, cutoff, worst, wit or zero)

    worst, wit = 0, None
    for a in range(cutoff + 1):
        for b in range(cutoff + 1):
            r = abs(g(b, a) - (g(a, b) + g(b, 0) - g(a, 0)))
            if r > worst:
                worst, wit = r, {"alpha": a, "beta": b}
    sub["inv_psi"] = Verdict("inv_psi", worst == 0, cutoff, worst, wit)

    ok = all(v.passed for v in sub.values())
    return Verdict("single_jump_balance", ok, cutoff, max(v.worst_residual for v in sub.values()),
                   None if ok else next(v.witness for v in sub.values() if not v.passed),
                   {k: v for k, v in sub.items()})


def g_factorial(family: RateFamily, n: int) -> Number:
    out = Fraction(1)
    for i in range(1, n + 1):
        out *= family(1, i, 0)
    return out


def check_mmzrp_invariance(family: RateFamily, mu: Marginal, cutoff: int) -> Verdict:
    """g^k_{a+k} mu(a+k) = mu(a) mu(k) g^k_k / mu(0) for k, a >= 1, a + k <= cutoff."""
    ws = _positive_weights(mu, cutoff)
    g = lambda k, a: family(k, a, 0)
    worst, wit = 0, None
    for k in range(1, cutoff):
        for a in range(1, cutoff - k + 1):
            r = abs(g(k, a + k) * ws[a + k] - ws[a] * ws[k] * g(k, k) / ws[0])
            if r > worst:
                worst, wit = r, {"k": k, "alpha": a + k}
    details = {}
    if all(g(1, a) > 0 for a in range(1, cutoff + 1)):
        fact = [g_factorial(family, n) for n in range(cutoff + 1)]
        w2, wit2 = 0, None
        for a in range(1, cutoff + 1):
            for k in range(1, a + 1):
                r = abs(g(k, a) - fact[a] / (fact[a - k] * fact[k]) * g(k, k))
                if r > w2:
                    w2, wit2 = r, {"k": k, "alpha": a}
        details["rate_only"] = Verdict("rate_only", w2 == 0, cutoff, w2, wit2)
    ok = worst == 0
    return Verdict("mmzrp_invariance", ok, cutoff, worst, wit, details)


def build_mmzrp_rates(mu: Marginal, c: Callable[[int], Number] | Mapping[int, Number],
                      cutoff: Optional[int] = None) -> RateFamily:
    """g^k_{a+k} = c(k) mu(a) / mu(a+k)."""
    cf = c if callable(c) else (lambda k, m=dict(c): m[k])
    if cutoff is not None:
        _positive_weights(mu, cutoff)
    raw = lambda k, a, b: cf(k) * mu.weight(a - k) / mu.weight(a)
    return RateFamily(ProcessClass.MMZRP, raw, {"c": c}, "mm-zrp from marginal")


# ---------------------------------------------------------------------------
# MM-TP: H recursion

class HTable:
    """H_a(b, k) for the multi-jump target process, exact and memoized.

    Entries are produced on demand, so evaluation beyond ``cutoff`` works as
    long as the marginal provides the required weights.
    """

    def __init__(self, mu: Marginal, cutoff: int):
        self.mu = mu
        self.cutoff = cutoff
        self._w: list = []
        self._H: dict = {}
        self._Hd: dict = {}
        self.verified_dual = False
        self.verified_psi_identity = False
        self.verified_expansion = False

    def w(self, n: int) -> Number:
        ws = self._w
        while len(ws) <= n:
            v = self.mu.weight(len(ws))
            if not v > 0:
                raise ValueError(f"zero weight at n={len(ws)}")
            ws.append(v)
        return ws[n]

    def delta(self, r: int, s: int) -> Number:
        return self.w(r + s) / self.w(r) - self.w(r + s - 1) / self.w(r - 1)

    def H(self, a: int, b: int, k: int) -> Number:
        key = (a, b, k)
        val = self._H.get(key)
        if val is None:
            val = self.delta(a, k) * self.w(b - k)
            for l in range(1, b - k + 1):
                val += self.delta(a, l) * self.H(l, b - l, k)
            self._H[key] = val
        return val

    def H_dual(self, a: int, b: int, k: int) -> Number:
        key = (a, b, k)
        val = self._Hd.get(key)
        if val is None:
            val = self.delta(a, k) * self.w(b - k)
            for l in range(1, b - k + 1):
                val += self.H_dual(a, b - k, l) * self.delta(l, k)
            self._Hd[key] = val
        return val

    def H_expansion(self, a: int, b: int, k: int) -> Number:
        """Sum over chains a -> k_1 -> ... -> k_r -> k (unrolled recursion)."""
        total = self.delta(a, k) * self.w(b - k)
        budget = b - k

        def walk(prod, last, used):
            nonlocal total
            for kj in range(1, budget - used + 1):
                p = prod * self.delta(last, kj)
                total += p * self.delta(kj, k) * self.w(b - k - used - kj)
                walk(p, kj, used + kj)

        walk(Fraction(1), a, 0)
        return total

    def grid(self):
        c = self.cutoff
        return {(a, b, k): self.H(a, b, k)
                for a in range(1, c + 1) for b in range(1, c + 1) for k in range(1, b + 1)}

    def verify(self, expansion_upto: int = 6) -> "HTable":
        c = self.cutoff
        self.verified_dual = all(self.H(a, b, k) == self.H_dual(a, b, k)
                                 for a in range(1, c + 1) for b in range(1, c + 1)
                                 for k in range(1, b + 1))
        ok = True
        for b in range(2, c + 1):
            for k in range(1, b):
                lhs = sum((self.w(l) * self.H(l, b - l, k) for l in range(1, b - k + 1)), Fraction(0))
                if lhs != self.w(0) * self.w(b) - self.w(k) * self.w(b - k):
                    ok = False
        self.verified_psi_identity = ok
        m = min(c, expansion_upto)
        self.verified_expansion = all(self.H(a, b, k) == self.H_expansion(a, b, k)
                                      for a in range(1, m + 1) for b in range(1, m + 1)
                                      for k in range(1, b + 1))
        return self

    def to_text(self) -> str:
        return "".join(f"{a} {b} {k} {v}\n" for (a, b, k), v in sorted(self.grid().items()))


def build_h_table(mu: Marginal, cutoff: int) -> HTable:
    return HTable(mu, cutoff).verify()


class NegativeRate(ValueError):
    def __init__(self, alpha, beta, value):
        super().__init__(f"negative rate g^{alpha}_(*,{beta}) = {value}")
        self.alpha, self.beta, self.value = alpha, beta, value


def build_mmtp_rates(mu: Marginal, g_star_0: Callable[[int], Number] | Mapping[int, Number],
                     cutoff: int, table: Optional[HTable] = None) -> RateFamily:
    """g^a_{*,b} = g^a_{*,0} + (1/mu(b)) sum_{k<=b} H_a(b,k) g^k_{*,0}; sign-scanned up to cutoff."""
    g0 = g_star_0 if callable(g_star_0) else (lambda k, m=dict(g_star_0): m[k])
    ht = table or HTable(mu, cutoff)

    def rate(a: int, b: int) -> Number:
        val = g0(a)
        if b:
            val = val + sum((ht.H(a, b, k) * g0(k) for k in range(1, b + 1)), Fraction(0)) / ht.w(b)
        return val

    for a in range(1, cutoff + 1):
        for b in range(0, cutoff + 1):
            v = rate(a, b)
            if v < 0:
                raise NegativeRate(a, b, v)
    return RateFamily(ProcessClass.MMTP, lambda k, a, b: rate(k, b),
                      {"g_star_0": g_star_0, "cutoff": cutoff, "h_table": ht}, "mm-tp from marginal")


def w_from_mmtp_rates(family: RateFamily, cutoff: int) -> Marginal:
    """w(0..cutoff) from the rates alone; refuses if a partial sum is nonpositive."""
    g = lambda k, b: family(k, k, b)
    if g(1, 0) == 0 or g(1, 1) == 0:
        raise ValueError("need g^1_{*,0} g^1_{*,1} != 0")
    ws = [Fraction(1), g(1, 0), g(1, 0) * g(1, 1)]
    partial = g(1, 1)
    for a in range(3, cutoff + 1):
        k = a - 1
        partial = partial + g(k, 1) - g(k, 0)
        if not partial > 0:
            raise ValueError(f"nonpositive partial sum at alpha={k}")
        ws.append(ws[-1] * partial)
    return Marginal(tuple(ws[:cutoff + 1]))


# ---------------------------------------------------------------------------
# exact stationarity on the simplex

def simplex_states(L: int, N: int):
    """All occupations of L sites with N particles (stars and bars)."""
    for bars in itertools.combinations(range(N + L - 1), L - 1):
        prev = -1
        eta = []
        for b in bars:
            eta.append(b - prev - 1)
            prev = b
        eta.append(N + L - 2 - prev)
        yield tuple(eta)


def generator_entries(family: RateFamily, pxy: dict, eta: tuple):
    """Yield (target state, rate) for all transitions out of eta; pxy is the torus kernel."""
    for (x, y), p in pxy.items():
        a, b = eta[x], eta[y]
        for k in range(1, a + 1):
            r = family(k, a, b)
            if r:
                zeta = list(eta)
                zeta[x] -= k
                zeta[y] += k
                yield tuple(zeta), p * r


@dataclass
class StationarityReport:
    residual: Number
    states: int
    wall_time: float
    L: int
    N: int
    witness: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.residual == 0


def exact_stationarity_check(family: RateFamily, mu: Marginal, L: int, N: int,
                             kernel: Kernel, guard: int = STATE_GUARD) -> StationarityReport:
    """max |(mu_{N,L} Q)(zeta)| with mu_{N,L}(eta) proportional to prod_x mu(eta(x))."""
    t0 = time.perf_counter()
    n_sites = kernel.n_sites(L)
    count = math.comb(N + n_sites - 1, n_sites - 1)
    if count > guard:
        raise GuardExceeded("state_space", count, guard)
    ws = [mu.weight(n) for n in range(N + 1)]
    states = list(simplex_states(n_sites, N))
    weight = {}
    for eta in states:
        p = Fraction(1)
        for v in eta:
            p *= ws[v]
        weight[eta] = p
    Z = sum(weight.values(), Fraction(0))
    res = dict.fromkeys(states, Fraction(0))
    pxy = kernel.torus_matrix(L)
    for eta in states:
        pe = weight[eta]
        for zeta, r in generator_entries(family, pxy, eta):
            flow = pe * r
            res[zeta] += flow
            res[eta] -= flow
    worst, wit = Fraction(0), None
    for eta, r in res.items():
        if abs(r) > worst:
            worst, wit = abs(r), eta
    return StationarityReport(worst / Z, len(states), time.perf_counter() - t0, L, N, wit)


def exact_stationary_law(family: RateFamily, kernel: Kernel, L: int, N: int,
                         guard: int = 5000) -> dict:
    """Null vector of the exact Q matrix on the simplex, normalized to sum 1."""
    from sympy import QQ
    from sympy.polys.matrices import DomainMatrix

    n_sites = kernel.n_sites(L)
    states = list(simplex_states(n_sites, N))
    if len(states) > guard:
        raise GuardExceeded("null_vector_states", len(states), guard)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    rows = [[QQ(0)] * n for _ in range(n)]  # rows of Q^T
    pxy = kernel.torus_matrix(L)
    for eta in states:
        i = index[eta]
        for zeta, r in generator_entries(family, pxy, eta):
            j = index[zeta]
            r = Fraction(r)
            q = QQ(r.numerator, r.denominator)
            rows[j][i] += q
            rows[i][i] -= q
    M = DomainMatrix(rows, (n, n), QQ)
    ns = M.nullspace()
    if ns.shape[0] != 1:
        raise ValueError(f"null space has dimension {ns.shape[0]}")
    vec = [Fraction(int(v.numerator), int(v.denominator)) for v in ns.to_Matrix().tolist()[0]]
    s = sum(vec)
    return {st: v / s for st, v in zip(states, vec)}
