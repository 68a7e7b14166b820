"""Canonical ensembles on L sites, max-site laws and condensation set-ups.

Z[l][n] = sum_k w(k) Z[l-1][n-k] with Z[0] = delta_0.  Rational weights give
an exact table while the convolution count stays under EXACT_BUDGET;
beyond that, and for float weights, entries are compensated float sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .invariance import GuardExceeded
from .measures import INF, Marginal, critical_profile, tilt_and_partition

TABLE_GUARD = 50_000_000
EXACT_BUDGET = 3_000_000


class NotSummable(ValueError):
    pass


@dataclass
class CanonicalEnsemble:
    w: Marginal
    L: int
    N: int
    Z: list  # Z[l][n], l = 0..L, n = 0..N
    weights: list
    exact: bool

    def partition(self, n: int, l: int):
        return self.Z[l][n]

    def probability(self, eta: Sequence[int]):
        if len(eta) != self.L or sum(eta) != self.N:
            return Fraction(0) if self.exact else 0.0
        p = Fraction(1) if self.exact else 1.0
        for k in eta:
            p *= self.weights[k]
        return p / self.Z[self.L][self.N]


def _weights(w: Marginal, N: int, exact: bool) -> list:
    vals = [w.weight(n) for n in range(N + 1)]
    if any(v < 0 for v in vals):
        raise ValueError("weights must be nonnegative")
    return vals if exact else [float(v) for v in vals]


def _exact_affordable(w: Marginal, L: int, N: int, mode: str) -> bool:
    if mode == "float":
        return False
    rational = all(not isinstance(w.weight(n), float) for n in range(N + 1))
    if mode == "exact":
        if not rational:
            raise ValueError("exact mode needs rational weights")
        return True
    return rational and L * (N + 1) * (N + 2) // 2 <= EXACT_BUDGET


def _convolve_exact(a: list, b: list, N: int) -> list:
    out = []
    for n in range(N + 1):
        s = Fraction(0)
        for k in range(n + 1):
            if a[k] and b[n - k]:
                s += a[k] * b[n - k]
        out.append(s)
    return out


def _convolve_float(a: np.ndarray, b: np.ndarray, N: int) -> np.ndarray:
    out = np.empty(N + 1)
    rb = b[::-1]
    for n in range(N + 1):
        out[n] = math.fsum(a[: n + 1] * rb[N - n:])
    return out


def build_canonical(w: Marginal, L: int, N: int, mode: str = "auto") -> CanonicalEnsemble:
    """Partition table for N particles on 1..L sites.

    mode is "exact", "float" or "auto" (exact when the weights are rational
    and the table is small enough).
    """
    if L < 1 or N < 0:
        raise ValueError("need L >= 1 and N >= 0")
    if L * (N + 1) > TABLE_GUARD:
        raise GuardExceeded("canonical_table", L * (N + 1), TABLE_GUARD)
    exact = _exact_affordable(w, L, N, mode)
    ws = _weights(w, N, exact)
    if exact:
        Z = [[Fraction(1)] + [Fraction(0)] * N]
        for _ in range(L):
            Z.append(_convolve_exact(ws, Z[-1], N))
    else:
        wa = np.array(ws)
        Z = [np.zeros(N + 1)]
        Z[0][0] = 1.0
        for _ in range(L):
            Z.append(_convolve_float(wa, Z[-1], N))
    if not Z[L][N] > 0:
        raise ValueError("canonical partition value is zero")
    return CanonicalEnsemble(w, L, N, Z, ws, exact)


def canonical_marginal(ens: CanonicalEnsemble, sites: int) -> np.ndarray:
    """Joint law of the first `sites` occupancies as an array of shape (N+1,)*sites."""
    if not 0 <= sites <= ens.L:
        raise ValueError("sites must lie in 0..L")
    N, rest = ens.N, ens.L - sites
    ZN = ens.Z[ens.L][N]
    if sites == 0:
        return np.array(Fraction(1) if ens.exact else 1.0, dtype=object if ens.exact else float)
    if ens.exact:
        out = np.empty((N + 1,) * sites, dtype=object)
        for ks in itertools.product(range(N + 1), repeat=sites):
            s = sum(ks)
            if s > N:
                out[ks] = Fraction(0)
                continue
            p = Fraction(1)
            for k in ks:
                p *= ens.weights[k]
            out[ks] = p * ens.Z[rest][N - s] / ZN
        return out
    w = np.array(ens.weights)
    grids = np.indices((N + 1,) * sites)
    total = grids.sum(axis=0)
    prod = np.ones((N + 1,) * sites)
    for g in grids:
        prod *= w[g]
    zr = np.asarray(ens.Z[rest])
    inside = total <= N
    out = np.zeros_like(prod)
    out[inside] = prod[inside] * zr[N - total[inside]] / ZN
    return out


def max_site_law(ens: CanonicalEnsemble, mode: str = "auto") -> np.ndarray:
    """P(M = m), m = 0..N, from P(M <= m) = Z^{(<= m)}_{N,L} / Z_{N,L}.

    One truncated table per m, so the exact path costs N times the ensemble;
    "auto" keeps it exact only within EXACT_BUDGET.
    """
    N, L = ens.N, ens.L
    exact = ens.exact and (mode == "exact" or
                           (mode == "auto" and N * L * (N + 1) * (N + 2) // 2 <= EXACT_BUDGET))
    if exact:
        ZN, weights, one, zero = ens.Z[L][N], ens.weights, Fraction(1), Fraction(0)
    else:
        ZN, weights, one, zero = float(ens.Z[L][N]), [float(x) for x in ens.weights], 1.0, 0.0
    cdf = []
    for m in range(N + 1):
        if m * L < N:
            cdf.append(zero)
        elif m == N:
            cdf.append(one)
        elif exact:
            wm = [x if k <= m else zero for k, x in enumerate(weights)]
            z = [one] + [zero] * N
            for _ in range(L):
                z = _convolve_exact(wm, z, N)
            cdf.append(z[N] / ZN)
        else:
            wm = np.array(weights)
            wm[m + 1:] = 0.0
            z = np.zeros(N + 1)
            z[0] = 1.0
            for _ in range(L):
                z = _convolve_float(wm, z, N)
            cdf.append(z[N] / ZN)
    law = [cdf[0]] + [cdf[m] - cdf[m - 1] for m in range(1, N + 1)]
    return np.array(law, dtype=object if exact else float)


# ---------------------------------------------------------------------------
# fixed volume

def _sorted_tuples(n_coords: int, N: int, L: int):
    """Nondecreasing tuples s of length n_coords with sum(s) + s[-1] <= N (or n_coords = 0)."""
    if n_coords == 0:
        yield ()
        return

    def rec(prefix, lo, budget, left):
        if left == 0:
            yield tuple(prefix)
            return
        # the dropped maximum must be at least the last kept value
        for v in range(lo, N + 1):
            if budget - v < 0 or v * (left + 1) > budget:
                break
            prefix.append(v)
            yield from rec(prefix, v, budget - v, left - 1)
            prefix.pop()

    yield from rec([], 0, N, n_coords)


def fixed_volume_tv(w: Marginal, L: int, N: int, reference: str = "sorted_product") -> float:
    """TV between the law of the L-1 smallest occupancies under mu_{N,L} and the reference.

    reference "sorted_product": L-1 independent sites from mu_1, sorted.
    reference "drop_max_product": L independent sites from mu_1, sorted, maximum dropped.
    """
    tf = tilt_and_partition(w, 1)
    if tf.divergent or tf.Z == INF:
        raise NotSummable("the weights are not summable at fugacity 1")
    Z1 = float(tf.Z)
    wf = np.array([float(w.weight(n)) for n in range(N + 1)])
    mu1 = wf / Z1
    ens = build_canonical(w, L, N, mode="float")
    ZN = ens.Z[L][N]
    k = L - 1
    if k == 0:
        return 0.0
    # vectorize over the last two kept coordinates
    tv = 0.0
    covered = 0.0
    if reference == "drop_max_product":
        cdf = np.cumsum(mu1)
    for prefix in _sorted_tuples(max(k - 2, 0), N, L):
        base = sum(prefix)
        lo = prefix[-1] if prefix else 0
        if k == 1:
            s = np.arange(0, N // 2 + 1)
            M = N - s
            mult = np.where(M == s, 1, 2).astype(float)
            p = mult * wf[s] * wf[M] / ZN
            if reference == "sorted_product":
                q = mu1[s]
            else:
                # P(min = s) for two iid sites
                tail_ge = 1 - np.concatenate(([0.0], cdf[:-1]))[s]
                tail_gt = 1 - cdf[s]
                q = tail_ge ** 2 - tail_gt ** 2
            tv += np.abs(p - q).sum()
            covered += q.sum()
            continue
        s1 = np.arange(lo, N + 1)
        A, B = np.meshgrid(s1, s1, indexing="ij")
        M = N - base - A - B
        ok = (B >= A) & (M >= B)
        A, B, M = A[ok], B[ok], M[ok]
        if reference != "sorted_product":
            raise NotImplementedError("drop_max_product reference is implemented for L = 2 only")
        cols = [np.full(A.shape, v) for v in prefix] + [A, B]
        kept = np.stack(cols, axis=1)
        full = np.concatenate([kept, M[:, None]], axis=1)
        pw = math.prod(wf[v] for v in prefix)
        pq = math.prod(mu1[v] for v in prefix)
        p = _arrangements_rows(full) * pw * wf[A] * wf[B] * wf[M] / ZN
        q = _arrangements_rows(kept) * pq * mu1[A] * mu1[B]
        tv += np.abs(p - q).sum()
        covered += q.sum()
    return 0.5 * (tv + max(0.0, 1.0 - covered))


def _arrangements_rows(rows: np.ndarray) -> np.ndarray:
    """Distinct orderings of each row; rows must be sorted."""
    run = np.ones(rows.shape[0])
    denom = np.ones(rows.shape[0])
    for c in range(1, rows.shape[1]):
        run = np.where(rows[:, c] == rows[:, c - 1], run + 1, 1.0)
        denom *= run
    return math.factorial(rows.shape[1]) / denom


@dataclass
class DecayTable:
    rows: list  # (x, tv)
    label: str
    heuristic_verdict: Optional[bool] = None
    note: str = "table only; no limit is claimed"
    extra: dict = field(default_factory=dict)

    @property
    def values(self) -> list:
        return [tv for _, tv in self.rows]

    @property
    def decreasing(self) -> bool:
        v = self.values
        return all(v[i + 1] < v[i] for i in range(len(v) - 1))

    def to_text(self) -> str:
        return "".join(f"{x} {tv:.12g}\n" for x, tv in self.rows)


def fixed_volume_test(w: Marginal, L: int, N_list: Sequence[int],
                      reference: str = "sorted_product") -> DecayTable:
    if L > 4:
        raise ValueError("fixed-volume enumeration is limited to L <= 4")
    rows = [(int(N), fixed_volume_tv(w, L, int(N), reference)) for N in N_list]
    t = DecayTable(rows, f"fixed volume L={L}, reference={reference}")
    t.heuristic_verdict = rows[-1][1] < 0.05
    return t


# ---------------------------------------------------------------------------
# thermodynamic direction

def fugacity_for_density(w: Marginal, rho) -> tuple:
    """(phi, rho_used): phi solving rho(phi) = min(rho, rho_c)."""
    prof = critical_profile(w)
    rho = float(rho)
    rho_c = float(prof.rho_c)
    if rho >= rho_c:
        return prof.phi_c, rho_c
    phi_c = float(prof.phi_c)
    f = lambda p: float(tilt_and_partition(w, p).rho) - rho
    lo, hi = 1e-12, phi_c * (1 - 1e-15) if rho_c == INF else phi_c
    if phi_c == math.inf:
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
    elif rho_c == INF:
        # push hi toward phi_c until the density exceeds the target
        hi = phi_c * 0.5
        while f(hi) < 0:
            hi = phi_c - (phi_c - hi) / 2
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-14), rho


def grand_canonical_pmf(w: Marginal, phi, upto: int) -> tuple:
    """(pmf[0..upto], mass beyond upto) at fugacity phi."""
    tf = tilt_and_partition(w, phi)
    if tf.divergent:
        raise NotSummable("fugacity beyond the radius of convergence")
    pmf = np.array([float(tf.pmf(n)) for n in range(upto + 1)])
    return pmf, max(0.0, 1.0 - math.fsum(pmf))


def thermodynamic_tv(w: Marginal, rho, L: int, sites: int = 1) -> dict:
    N = int(math.floor(float(rho) * L))
    if sites == 0:
        return {"L": L, "N": N, "tv": 0.0}
    phi, rho_used = fugacity_for_density(w, rho)
    ens = build_canonical(w, L, N)
    marg = canonical_marginal(ens, sites).astype(float)
    pmf, beyond = grand_canonical_pmf(w, phi, N)
    q = pmf
    for _ in range(sites - 1):
        q = np.multiply.outer(q, pmf)
    covered = q.sum()
    tv = 0.5 * (np.abs(marg - q).sum() + max(0.0, 1.0 - covered))
    return {"L": L, "N": N, "tv": float(tv), "phi": float(phi), "rho_gc": rho_used,
            "ensemble": ens}


def thermodynamic_test(w: Marginal, rho, L_list: Sequence[int], sites: int = 1) -> DecayTable:
    rows, extra = [], {"max_site_mode": {}, "condensate_target": {}}
    rho_c = float(critical_profile(w).rho_c)
    for L in L_list:
        r = thermodynamic_tv(w, rho, L, sites)
        rows.append((L, r["tv"]))
        if "ensemble" in r:
            law = max_site_law(r["ensemble"]).astype(float)
            extra["max_site_mode"][L] = int(np.argmax(law))
            extra["condensate_target"][L] = (float(rho) - rho_c) * L if float(rho) > rho_c else None
    t = DecayTable(rows, f"thermodynamic rho={rho}, sites={sites}", extra=extra)
    t.heuristic_verdict = rows[-1][1] < 0.05 if rows else None
    return t
