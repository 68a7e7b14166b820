"""Continuous-time kinetic Monte Carlo on periodic tori.

The event loop is compiled with numba.  Per-site departure weights
D(x) = sum_j p_j sum_k g^k(eta(x), eta(x + v_j)) live in a binary sum tree;
after a jump x -> y only x, y and the sites pointing at them are refreshed,
and the whole tree is rebuilt every AUDIT_EVERY events to stop drift.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .invariance import GuardExceeded
from .lattice import Kernel
from .measures import Marginal, tilt_and_partition
from .rates import ProcessClass, RateFamily, as_number

__all__ = ["Kernel", "Configuration", "System", "SimReport", "build_system", "simulate",
           "simulate_coupled", "estimate_observables", "run_replicas", "replica_seeds",
           "rate_tables", "total_variation"]

AUDIT_EVERY = 1_000_000
CONSERVATION_EVERY = 10_000
TABLE_GUARD = 50_000_000


@dataclass
class Configuration:
    occupancy: np.ndarray
    L: int
    d: int = 1

    @property
    def N(self) -> int:
        return int(self.occupancy.sum())

    def to_text(self) -> str:
        return " ".join(str(int(v)) for v in self.occupancy)


@dataclass
class System:
    family: RateFamily
    kernel: Kernel
    L: int
    config: Configuration
    seed: int
    init: str
    targets: np.ndarray = field(repr=False, default=None)
    sources: np.ndarray = field(repr=False, default=None)
    probs: np.ndarray = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def n_sites(self) -> int:
        return self.kernel.n_sites(self.L)


@dataclass
class SimReport:
    seed: int
    events: int
    time: float
    burn_in: int
    histogram: np.ndarray
    max_law: np.ndarray
    N: int
    L: int
    tv: Optional[float] = None
    order_violations: Optional[int] = None
    absorbing: bool = False
    final: Optional[np.ndarray] = None
    histogram_second: Optional[np.ndarray] = None
    histogram_stderr: Optional[np.ndarray] = None
    replicas: int = 1
    checkpoints: list = field(default_factory=list)
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# tables

_TABLE_CACHE: dict = {}


def rate_tables(family: RateFamily, amax: int):
    """(rates[a, b, k], tails[a, b, i], total[a, b]) as floats for 0 <= a, b <= amax.

    The b axis has length 1 when rates ignore the arrival occupancy.
    tails[a, b, i] = sum_{k > i} g^k; tails[a, b, 0] is the total rate.
    """
    key = (id(family), amax)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit[0] is family:
        return hit[1]
    departure_only = family.kind in (ProcessClass.MMZRP, ProcessClass.SINGLE_ZRP)
    nb = 1 if departure_only else amax + 1
    size = (amax + 1) * nb * (amax + 1)
    if size > TABLE_GUARD:
        raise GuardExceeded("rate_table", size, TABLE_GUARD)
    rates = np.zeros((amax + 1, nb, amax + 1))
    kmax = 1 if family.kind.single_jump else amax
    for a in range(1, amax + 1):
        for b in range(nb):
            for k in range(1, min(a, kmax) + 1):
                rates[a, b, k] = float(family(k, a, b))
    tails = np.zeros_like(rates)
    tails[:, :, :-1] = np.cumsum(rates[:, :, ::-1], axis=2)[:, :, ::-1][:, :, 1:]
    # exact sums would be nicer but the float tail only feeds the sampler
    total = tails[:, :, 0].copy()
    out = (rates, tails, total)
    _TABLE_CACHE[key] = (family, out)
    return out


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@numba.njit(cache=True, inline="always")
def _bidx(b, nb):
    return b if nb > 1 else 0


@numba.njit(cache=True)
def _site_weight(x, eta, targets, probs, total):
    nb = total.shape[1]
    a = eta[x]
    if a == 0:
        return 0.0
    s = 0.0
    for j in range(targets.shape[0]):
        y = targets[j, x]
        if y != x:
            s += probs[j] * total[a, _bidx(eta[y], nb)]
    return s


@numba.njit(cache=True)
def _site_weight_coupled(x, eta, zeta, targets, probs, total):
    nb = total.shape[1]
    a, c = eta[x], zeta[x]
    if a == 0 and c == 0:
        return 0.0
    s = 0.0
    for j in range(targets.shape[0]):
        y = targets[j, x]
        if y != x:
            t1 = total[a, _bidx(eta[y], nb)]
            t2 = total[c, _bidx(zeta[y], nb)]
            s += probs[j] * (t1 if t1 > t2 else t2)
    return s


@numba.njit(cache=True)
def _tree_set(tree, P, x, w):
    i = P + x
    tree[i] = w
    i //= 2
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i //= 2


@numba.njit(cache=True)
def _tree_find(tree, P, u):
    i = 1
    while i < P:
        left = tree[2 * i]
        if u < left:
            i = 2 * i
        else:
            u -= left
            i = 2 * i + 1
    return i - P


@numba.njit(cache=True)
def _rebuild(tree, P, n, eta, zeta, coupled, targets, probs, total):
    tree[:] = 0.0
    for x in range(n):
        if coupled:
            tree[P + x] = _site_weight_coupled(x, eta, zeta, targets, probs, total)
        else:
            tree[P + x] = _site_weight(x, eta, targets, probs, total)
    for i in range(P - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@numba.njit(cache=True)
def _refresh(x, tree, P, eta, zeta, coupled, targets, sources, probs, total):
    if coupled:
        _tree_set(tree, P, x, _site_weight_coupled(x, eta, zeta, targets, probs, total))
    else:
        _tree_set(tree, P, x, _site_weight(x, eta, targets, probs, total))
    for j in range(sources.shape[0]):
        z = sources[j, x]
        if coupled:
            _tree_set(tree, P, z, _site_weight_coupled(z, eta, zeta, targets, probs, total))
        else:
            _tree_set(tree, P, z, _site_weight(z, eta, targets, probs, total))


@numba.njit(cache=True)
def _pick_target(x, eta, zeta, coupled, targets, probs, total):
    nb = total.shape[1]
    a = eta[x]
    w = 0.0
    for j in range(targets.shape[0]):
        y = targets[j, x]
        if y == x:
            continue
        t = total[a, _bidx(eta[y], nb)]
        if coupled:
            t2 = total[zeta[x], _bidx(zeta[y], nb)]
            if t2 > t:
                t = t2
        w += probs[j] * t
    u = np.random.random() * w
    last = -1
    for j in range(targets.shape[0]):
        y = targets[j, x]
        if y == x:
            continue
        t = total[a, _bidx(eta[y], nb)]
        if coupled:
            t2 = total[zeta[x], _bidx(zeta[y], nb)]
            if t2 > t:
                t = t2
        c = probs[j] * t
        if c > 0.0:
            last = j
            if u < c:
                return j
            u -= c
    return last


@numba.njit(cache=True)
def _pick_size(a, bi, rates, total):
    u = np.random.random() * total[a, bi]
    last = 1
    for k in range(1, a + 1):
        r = rates[a, bi, k]
        if r > 0.0:
            last = k
            if u < r:
                return k
            u -= r
    return last


@numba.njit(cache=True)
def _tail_index(a, bi, tails, u):
    # number of i >= 0 with tails[a, bi, i] > u
    k = 0
    while k < a and tails[a, bi, k] > u:
        k += 1
    return k


@numba.njit(cache=True, nogil=True)
def _run(n_events, record, eta, zeta, coupled, ordered, targets, sources, probs,
         rates, tails, total, tree, P, hist, hist2, last, maxcnt, maxhist, fstate, istate):
    """Advance the chain by n_events.  Returns 1 if an absorbing state is hit.

    fstate = [time, recorded time]; istate = [current max, events since audit,
    order violations, expected N, expected N of second copy].
    """
    n = eta.shape[0]
    nb = total.shape[1]
    for _ in range(n_events):
        R = tree[1]
        if not R > 0.0:
            return 1
        dt = -math.log(1.0 - np.random.random()) / R
        t_new = fstate[0] + dt
        if record:
            maxhist[istate[0]] += dt
            fstate[1] += dt
        x = _tree_find(tree, P, np.random.random() * R)
        if x >= n:
            x = n - 1
        j = _pick_target(x, eta, zeta, coupled, targets, probs, total)
        if j < 0:
            # stale weight from rounding; rebuild and retry this event
            _rebuild(tree, P, n, eta, zeta, coupled, targets, probs, total)
            continue
        y = targets[j, x]
        if coupled:
            ia, ic = _bidx(eta[y], nb), _bidx(zeta[y], nb)
            t1, t2 = total[eta[x], ia], total[zeta[x], ic]
            u = np.random.random() * (t1 if t1 > t2 else t2)
            k = _tail_index(eta[x], ia, tails, u) if u < t1 else 0
            l = _tail_index(zeta[x], ic, tails, u) if u < t2 else 0
        else:
            k = _pick_size(eta[x], _bidx(eta[y], nb), rates, total)
            l = 0
        if record:
            hist[eta[x]] += t_new - last[x]
            hist[eta[y]] += t_new - last[y]
            last[x] = t_new
            last[y] = t_new
            if coupled:
                hist2[zeta[x]] += t_new - last[n + x]
                hist2[zeta[y]] += t_new - last[n + y]
                last[n + x] = t_new
                last[n + y] = t_new
        fstate[0] = t_new
        if k > 0:
            maxcnt[eta[x]] -= 1
            maxcnt[eta[y]] -= 1
            eta[x] -= k
            eta[y] += k
            maxcnt[eta[x]] += 1
            maxcnt[eta[y]] += 1
            if eta[y] > istate[0]:
                istate[0] = eta[y]
            while maxcnt[istate[0]] == 0:
                istate[0] -= 1
        if l > 0:
            zeta[x] -= l
            zeta[y] += l
        if coupled and ordered != 0:
            for z in (x, y):
                if ordered > 0 and eta[z] > zeta[z]:
                    istate[2] += 1
                    break
                if ordered < 0 and zeta[z] > eta[z]:
                    istate[2] += 1
                    break
        _refresh(x, tree, P, eta, zeta, coupled, targets, sources, probs, total)
        _refresh(y, tree, P, eta, zeta, coupled, targets, sources, probs, total)
        istate[1] += 1
        if istate[1] % CONSERVATION_EVERY == 0:
            if eta.sum() != istate[3]:
                raise RuntimeError("particle number not conserved")
            if coupled and zeta.sum() != istate[4]:
                raise RuntimeError("particle number not conserved in second copy")
        if istate[1] >= AUDIT_EVERY:
            istate[1] = 0
            _rebuild(tree, P, n, eta, zeta, coupled, targets, probs, total)
    return 0


@numba.njit(cache=True)
def _flush(eta, zeta, coupled, hist, hist2, last, t):
    n = eta.shape[0]
    for z in range(n):
        hist[eta[z]] += t - last[z]
        last[z] = t
        if coupled:
            hist2[zeta[z]] += t - last[n + z]
            last[n + z] = t


# ---------------------------------------------------------------------------
# public API

def _geometry(kernel: Kernel, L: int):
    targets, probs = kernel.neighbour_arrays(L)
    n = kernel.n_sites(L)
    sources = np.empty_like(targets)
    for j in range(targets.shape[0]):
        sources[j, targets[j]] = np.arange(n)
    return targets, sources, probs


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1)[0])


def build_system(family: RateFamily, kernel: Kernel, L: int, init="fixed_density", seed: int = 0,
                 density=None, N: Optional[int] = None, occupancy: Optional[Sequence[int]] = None,
                 mu: Optional[Marginal] = None, phi=1) -> System:
    """Assemble a torus, an initial configuration and the neighbour tables.

    init is one of "fixed_density" (N = round(density * sites), placed
    uniformly at random, or N given directly), "deterministic" (occupancy
    given) or "product_sample" (iid sites from mu tilted by phi).
    """
    if L < 1:
        raise ValueError("L must be positive")
    n = kernel.n_sites(L)
    rng = np.random.Generator(np.random.PCG64(_derived_seed(seed, 0)))
    if init == "deterministic":
        if occupancy is None:
            raise ValueError("deterministic init needs an occupancy vector")
        eta = np.asarray(occupancy, dtype=np.int64).ravel()
        if eta.shape[0] != n or (eta < 0).any():
            raise ValueError(f"occupancy must be {n} nonnegative counts")
    elif init == "fixed_density":
        if N is None:
            if density is None:
                raise ValueError("fixed_density init needs density or N")
            N = int(round(float(as_number(density)) * n))
        eta = rng.multinomial(int(N), np.full(n, 1.0 / n)).astype(np.int64)
    elif init == "product_sample":
        if mu is None:
            raise ValueError("product_sample init needs a marginal")
        tf = tilt_and_partition(mu, phi)
        pmf = np.array([float(tf.pmf(m)) for m in range(len(mu.weights))])
        pmf = pmf / pmf.sum()
        eta = rng.choice(len(pmf), size=n, p=pmf).astype(np.int64)
    else:
        raise ValueError(f"unknown init {init!r}")
    targets, sources, probs = _geometry(kernel, L)
    return System(family, kernel, L, Configuration(eta.copy(), L, kernel.d), int(seed), init,
                  targets, sources, probs)


def total_variation(hist: np.ndarray, target) -> float:
    """TV distance between an empirical histogram and a target law (array or Marginal)."""
    h = np.asarray(hist, dtype=float)
    if isinstance(target, Marginal):
        tf = tilt_and_partition(target, 1)
        m = max(len(h), len(target.weights))
        q = np.array([float(tf.pmf(i)) for i in range(m)])
        tail = max(0.0, 1.0 - q.sum())
    else:
        q = np.asarray(target, dtype=float)
        tail = 0.0
    m = max(len(h), len(q))
    h = np.pad(h, (0, m - len(h)))
    q = np.pad(q, (0, m - len(q)))
    return 0.5 * (np.abs(h - q).sum() + tail)


class _Engine:
    def __init__(self, systems: Sequence[System], seed: int):
        first = systems[0]
        self.coupled = len(systems) == 2
        for s in systems[1:]:
            if s.family is not first.family or s.kernel != first.kernel or s.L != first.L:
                raise ValueError("coupled systems must share family, kernel and L")
        self.systems = systems
        self.eta = first.config.occupancy.astype(np.int64).copy()
        self.zeta = (systems[1].config.occupancy.astype(np.int64).copy() if self.coupled
                     else np.zeros(1, dtype=np.int64))
        N = int(self.eta.sum())
        N2 = int(self.zeta.sum()) if self.coupled else 0
        amax = max(N, N2, 1)
        self.rates, self.tails, self.total = rate_tables(first.family, amax)
        n = self.eta.shape[0]
        self.n = n
        self.P = 1 << max(0, (n - 1).bit_length())
        self.tree = np.zeros(2 * self.P)
        self.hist = np.zeros(amax + 1)
        self.hist2 = np.zeros(amax + 1)
        self.maxhist = np.zeros(amax + 1)
        self.last = np.zeros(2 * n)
        self.maxcnt = np.bincount(self.eta, minlength=amax + 1).astype(np.int64)
        self.fstate = np.zeros(2)
        self.istate = np.array([int(self.eta.max()), 0, 0, N, N2], dtype=np.int64)
        self.ordered = 0
        if self.coupled:
            if (self.eta <= self.zeta).all():
                self.ordered = 1
            elif (self.zeta <= self.eta).all():
                self.ordered = -1
        _rebuild(self.tree, self.P, n, self.eta, self.zeta, self.coupled, first.targets,
                 first.probs, self.total)
        _seed(np.uint32(seed))
        self.events = 0
        self.absorbing = False

    def run(self, n_events: int, record: bool):
        if n_events <= 0 or self.absorbing:
            return
        s = self.systems[0]
        flag = _run(int(n_events), record, self.eta, self.zeta, self.coupled, self.ordered,
                    s.targets, s.sources, s.probs, self.rates, self.tails, self.total, self.tree,
                    self.P, self.hist, self.hist2, self.last, self.maxcnt, self.maxhist,
                    self.fstate, self.istate)
        self.absorbing = bool(flag)
        self.events += n_events

    def start_recording(self):
        self.last[:] = self.fstate[0]
        self.hist[:] = 0
        self.hist2[:] = 0
        self.maxhist[:] = 0
        self.fstate[1] = 0

    def snapshot(self):
        hist, hist2 = self.hist.copy(), self.hist2.copy()
        last = self.last.copy()
        _flush(self.eta, self.zeta, self.coupled, hist, hist2, last, self.fstate[0])
        return hist, hist2, self.maxhist.copy()


def _normalise(h: np.ndarray) -> np.ndarray:
    s = h.sum()
    return h / s if s > 0 else h


def _simulate(systems: Sequence[System], events: int, burn_in: int, target, checkpoints) -> SimReport:
    t0 = time.perf_counter()
    first = systems[0]
    seed = _derived_seed(first.seed, 1)
    eng = _Engine(systems, seed)
    eng.run(burn_in, record=False)
    eng.start_recording()
    marks = sorted(set(int(c) for c in (checkpoints or []) if 0 < c < events)) + [events]
    done = 0
    cps = []
    for m in marks:
        eng.run(m - done, record=True)
        done = m
        if m != events:
            h, _, _ = eng.snapshot()
            h = _normalise(h)
            cps.append({"events": m, "time": float(eng.fstate[0]),
                        "tv": None if target is None else total_variation(h, target),
                        "configuration": eng.eta.copy()})
    hist, hist2, maxhist = eng.snapshot()
    absorbing = eng.absorbing or eng.tree[1] <= 0
    if absorbing and hist.sum() == 0:
        # frozen configuration: the empirical law is the configuration itself
        hist = np.bincount(eng.eta, minlength=len(hist)).astype(float)
        maxhist = np.zeros_like(hist)
        maxhist[eng.eta.max() if eng.n else 0] = 1.0
        hist2 = (np.bincount(eng.zeta, minlength=len(hist)).astype(float) if eng.coupled else hist2)
    hist = _normalise(hist)
    rep = SimReport(
        seed=first.seed, events=eng.events - burn_in if not absorbing else eng.events, time=float(eng.fstate[0]),
        burn_in=burn_in, histogram=hist, max_law=_normalise(maxhist), N=int(eng.istate[3]), L=first.L,
        tv=None if target is None else total_variation(hist, target),
        order_violations=(int(eng.istate[2]) if eng.coupled and eng.ordered != 0 else None),
        absorbing=absorbing, final=eng.eta.copy(),
        histogram_second=_normalise(hist2) if eng.coupled else None,
        checkpoints=cps, wall_time=time.perf_counter() - t0)
    if eng.coupled:
        rep.checkpoints.append({"final_second": eng.zeta.copy()})
    return rep


def simulate(system: System, events: int, burn_in: int = 0, target=None,
             checkpoints: Optional[Sequence[int]] = None) -> SimReport:
    """Run one trajectory; histograms are time-weighted over the post burn-in window."""
    return _simulate([system], int(events), int(burn_in), target, checkpoints)


def simulate_coupled(systems: Sequence[System], events: int, burn_in: int = 0,
                     target=None) -> SimReport:
    """Run the basic coupling of two copies.

    At each bond the two copies share one uniform variable u on
    [0, max(Sigma^0_eta, Sigma^0_zeta)) and jump by the number of tail sums
    exceeding u; the resulting joint rates are the overlap rates G^{k,l}.
    """
    if len(systems) != 2:
        raise ValueError("simulate_coupled takes a pair of systems")
    return _simulate(list(systems), int(events), int(burn_in), target, None)


def replica_seeds(master: int, count: int) -> list:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(count)]


def estimate_observables(reports: Sequence[SimReport]) -> SimReport:
    """Merge replica reports: mean histograms with per-bin standard errors.

    Reports are reduced in seed order so the result does not depend on the
    order in which replicas finished.
    """
    if not reports:
        raise ValueError("need at least one report")
    reports = sorted(reports, key=lambda r: r.seed)
    m = max(len(r.histogram) for r in reports)
    pad = lambda a: np.pad(np.asarray(a, dtype=float), (0, m - len(a)))
    H = np.array([pad(r.histogram) for r in reports])
    M = np.array([pad(r.max_law) for r in reports])
    hist = H.mean(axis=0)
    se = H.std(axis=0, ddof=1) / math.sqrt(len(reports)) if len(reports) > 1 else np.zeros(m)
    second = None
    if all(r.histogram_second is not None for r in reports):
        second = np.array([pad(r.histogram_second) for r in reports]).mean(axis=0)
    viol = [r.order_violations for r in reports]
    first = reports[0]
    return SimReport(
        seed=first.seed, events=sum(r.events for r in reports), time=sum(r.time for r in reports),
        burn_in=first.burn_in, histogram=hist, max_law=M.mean(axis=0), N=first.N, L=first.L,
        tv=None, order_violations=None if any(v is None for v in viol) else sum(viol),
        absorbing=any(r.absorbing for r in reports), final=None, histogram_second=second,
        histogram_stderr=se, replicas=len(reports), wall_time=sum(r.wall_time for r in reports))


def run_replicas(family: RateFamily, kernel: Kernel, L: int, master_seed: int, replicas: int,
                 events: int, burn_in: int = 0, target=None, workers: int = 1, **init) -> SimReport:
    """Independent replicas with seeds spawned from master_seed, then merged."""
    seeds = replica_seeds(master_seed, replicas)

    def one(s):
        return simulate(build_system(family, kernel, L, seed=s, **init), events, burn_in)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(one, seeds))
    else:
        reps = [one(s) for s in seeds]
    agg = estimate_observables(reps)
    if target is not None:
        agg.tv = total_variation(agg.histogram, target)
    agg.seed = master_seed
    agg.checkpoints = [{"seed": r.seed, "tv": None if target is None else total_variation(r.histogram, target)}
                       for r in reps]
    return agg
