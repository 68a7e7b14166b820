"""Rate families g^k_{a,b} for mass migration processes.

A family maps (jump size k, departure occupancy a, arrival occupancy b) to a
nonnegative rate.  Support rules are enforced here, so the raw functions
supplied by built-ins only ever see 1 <= k <= a.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Any, Callable, Mapping, Optional, Union

Number = Union[Fraction, float, int]


class ProcessClass(enum.Enum):
    GENERAL = "general"
    MMZRP = "mm-zrp"
    MMTP = "mm-tp"
    SINGLE_MP = "single-mp"
    SINGLE_ZRP = "single-zrp"
    SINGLE_TP = "single-tp"

    @property
    def single_jump(self) -> bool:
        return self in (ProcessClass.SINGLE_MP, ProcessClass.SINGLE_ZRP, ProcessClass.SINGLE_TP)

    @property
    def departure_only(self) -> bool:
        return self in (ProcessClass.MMZRP, ProcessClass.SINGLE_ZRP)

    @property
    def arrival_only(self) -> bool:
        return self in (ProcessClass.MMTP, ProcessClass.SINGLE_TP)


def as_number(x: Any) -> Number:
    """Coerce a parameter to an exact rational where possible.

    Strings such as ``"3/2"`` and integers become ``Fraction``; floats stay
    floats (they select the float path).
    """
    if isinstance(x, bool):
        raise TypeError("boolean is not a number")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, str):
        s = x.strip()
        try:
            return Fraction(s)
        except ValueError:
            return float(s)
    if isinstance(x, float):
        return x
    raise TypeError(f"cannot interpret {x!r} as a number")


@dataclass(frozen=True, eq=False)
class RateFamily:
    kind: ProcessClass
    raw: Callable[[int, int, int], Number] = field(repr=False)
    params: Mapping[str, Any] = field(default_factory=dict)
    description: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, k: int, a: int, b: int) -> Number:
        return eval_rate(self, k, a, b)

    def total(self, a: int, b: int) -> Number:
        """Total departure rate sum_k g^k_{a,b}."""
        return sum((self(k, a, b) for k in range(1, a + 1)), Fraction(0))


def eval_rate(family: RateFamily, k: int, a: int, b: int) -> Number:
    if k < 1 or a < 1 or k > a or b < 0:
        return Fraction(0)
    kind = family.kind
    if kind.single_jump and k != 1:
        return Fraction(0)
    if kind.departure_only:
        key = (k, a, 0)
    elif kind.arrival_only:
        key = (k, 0, b)
    else:
        key = (k, a, b)
    cache = family._cache
    val = cache.get(key)
    if val is None:
        val = family.raw(k, a, b)
        if val < 0:
            raise ValueError(f"{family.description or 'family'}: negative rate at k={k}, a={a}, b={b}")
        cache[key] = val
    return val


# ---------------------------------------------------------------------------
# named sequences (used by built-ins and by the config front end)

def ex4_pi(b: Number, pi0: Optional[Number] = None) -> Callable[[int], Number]:
    """Power-law weights with pi(1) = 1 and pi(n)/pi(n+1) = 1 + b/n for n >= 1.

    ``pi0`` defaults to 1 + b, the smallest value keeping the ratio
    sequence nonincreasing from n = 0.
    """
    b = as_number(b)
    p0 = (1 + b) if pi0 is None else as_number(pi0)
    memo = [p0, Fraction(1) if not isinstance(b, float) else 1.0]

    def pi(n: int) -> Number:
        while len(memo) <= n:
            i = len(memo) - 1
            memo.append(memo[-1] / (1 + b / i))
        return memo[n]

    return pi


def ex4_weights(b: Number) -> Callable[[int], Number]:
    """w(n) = prod_{i<=n} (1 + b/i)^{-1}, w(0) = 1: the stationary weights of
    the zero-range process with g_n = 1 + b/n.  Equals ex4_pi shifted by one."""
    b = as_number(b)
    memo = [Fraction(1) if not isinstance(b, float) else 1.0]

    def w(n: int) -> Number:
        while len(memo) <= n:
            i = len(memo)
            memo.append(memo[-1] / (1 + b / i))
        return memo[n]

    return w


def qhahn_h(q: Number) -> Callable[[int], Number]:
    q = as_number(q)
    return lambda k: q ** (k - 1) * (1 - q) / (1 - q ** k)


_ONE = Fraction(1)


def sequence_from_spec(spec: Any) -> Callable[[int], Number]:
    """Turn a textual sequence description into a function of n.

    Accepted forms: a callable (returned unchanged), a number (constant),
    ``one``, ``n`` (identity), ``inv`` (1/n), ``inv_sq`` (1/n^2),
    ``k_then_inv:K`` (n for n < K, else 1/n), ``geometric:q`` (q^n),
    ``qhahn:q``, ``ex4_pi:b``, ``ex4_weights:b``.
    """
    if callable(spec):
        return spec
    if not isinstance(spec, str):
        c = as_number(spec)
        return lambda n: c
    name, _, arg = spec.partition(":")
    name = name.strip()
    if name == "one":
        return lambda n: _ONE
    if name == "n":
        return lambda n: Fraction(n)
    if name == "inv":
        return lambda n: Fraction(1, n)
    if name == "inv_sq":
        return lambda n: Fraction(1, n * n)
    if name == "k_then_inv":
        k0 = int(arg)
        return lambda n: Fraction(n) if n < k0 else Fraction(1, n)
    if name == "geometric":
        q = as_number(arg)
        return lambda n: q ** n
    if name == "qhahn":
        return qhahn_h(arg)
    if name == "ex4_pi":
        return ex4_pi(arg)
    if name == "ex4_weights":
        return ex4_weights(arg)
    try:
        c = as_number(spec)
    except (TypeError, ValueError):
        raise ValueError(f"unknown sequence {spec!r}") from None
    return lambda n: c


# ---------------------------------------------------------------------------
# built-in families

def _ex4_family(params: Mapping[str, Any]) -> RateFamily:
    b = as_number(params["b"])
    if not b > 1:
        raise ValueError("ex4_b_family needs b > 1")
    pi = ex4_pi(b, params.get("pi0"))
    h_spec = params.get("h", "pi")
    if h_spec == "pi":
        h = pi
    elif h_spec == "pi_over_k":
        h = lambda k: pi(k) / k
    else:
        h = sequence_from_spec(h_spec)
    measure = params.get("measure", "shifted")
    if measure == "shifted":
        # stationary weights w(n) = pi(n+1); g^1_a = h(1)(1 + b/a)
        w = ex4_weights(b)
        raw = lambda k, a, _b: h(k) * w(a - k) / w(a)
    elif measure == "example4":
        raw = lambda k, a, _b: pi(a - k) * h(k) / pi(a)
    else:
        raise ValueError(f"ex4_b_family: unknown measure {measure!r}")
    return RateFamily(ProcessClass.MMZRP, raw, dict(params),
                      f"ex4_b_family(b={b}, h={h_spec}, measure={measure})")


def make_builtin(name: str, params: Optional[Mapping[str, Any]] = None) -> RateFamily:
    p = dict(params or {})
    if name == "ex1_h":
        h = sequence_from_spec(p.get("h", "inv"))
        return RateFamily(ProcessClass.MMZRP, lambda k, a, b: h(k), p, f"ex1_h(h={p.get('h', 'inv')})")
    if name == "stick":
        return RateFamily(ProcessClass.MMZRP, lambda k, a, b: _ONE, p, "stick")
    if name == "ex2_r":
        r = sequence_from_spec(p.get("r", "one"))
        return RateFamily(ProcessClass.MMZRP, lambda k, a, b: r(a), p, f"ex2_r(r={p.get('r', 'one')})")
    if name == "qhahn":
        q = as_number(p.get("q", "1/2"))
        if not 0 < q < 1:
            raise ValueError("qhahn needs 0 < q < 1")
        h = qhahn_h(q)
        return RateFamily(ProcessClass.MMZRP, lambda k, a, b: h(k), p, f"qhahn(q={q})")
    if name == "ex3_pi_h":
        if "pi" not in p:
            raise ValueError("ex3_pi_h needs pi")
        pi = sequence_from_spec(p["pi"])
        h = pi if p.get("h", "pi") == "pi" else sequence_from_spec(p["h"])
        return RateFamily(ProcessClass.MMZRP, lambda k, a, b: pi(a - k) * h(k) / pi(a), p,
                          f"ex3_pi_h(pi={p['pi']}, h={p.get('h', 'pi')})")
    if name == "ex4_b_family":
        return _ex4_family(p)
    if name == "single_zrp":
        g = sequence_from_spec(p.get("g", "one"))
        return RateFamily(ProcessClass.SINGLE_ZRP, lambda k, a, b: g(a), p, f"single_zrp(g={p.get('g', 'one')})")
    if name == "single_tp":
        g = sequence_from_spec(p.get("g", "one"))
        return RateFamily(ProcessClass.SINGLE_TP, lambda k, a, b: g(b), p, f"single_tp(g={p.get('g', 'one')})")
    if name == "single_mp":
        g = p.get("g")
        if not callable(g):
            raise ValueError("single_mp needs a callable g(a, b)")
        return RateFamily(ProcessClass.SINGLE_MP, lambda k, a, b: g(a, b), p, "single_mp")
    if name == "table":
        entries = {tuple(int(i) for i in key): as_number(v) for key, v in dict(p.get("entries", {})).items()}
        default = as_number(p.get("default", 0))
        kind = ProcessClass(p.get("kind", "general"))
        return RateFamily(kind, lambda k, a, b: entries.get((k, a, b), default), p, "table")
    raise ValueError(f"unknown built-in family {name!r}")


# ---------------------------------------------------------------------------
# growth conditions

class Growth(enum.Enum):
    LINEAR = "LinearGrowth"
    LIPSCHITZ = "LipschitzJump"
    BOUNDED = "BoundedTotal"


@dataclass
class GrowthReport:
    condition: Growth
    scan_cutoff: int
    best_constant: Number
    violation: Optional[dict] = None
    note: str = "finite-range certificate: valid only on the scanned range"

    @property
    def passed(self) -> bool:
        return self.violation is None


def _first_moment(family, a, b):
    return sum((k * family(k, a, b) for k in range(1, a + 1)), Fraction(0))


def _lipschitz_step(family, a, b, a2, b2):
    top = max(a, a2)
    return sum((k * abs(family(k, a, b) - family(k, a2, b2)) for k in range(1, top + 1)), Fraction(0))


def check_growth(family: RateFamily, condition: Growth | str, cap: float = math.inf,
                 scan_cutoff: int = 30) -> GrowthReport:
    """Smallest constant that works on 0 <= a, b <= scan_cutoff.

    For the Lipschitz condition the left side is a weighted l1 distance
    between the rate vectors at (a, b) and (c, d), so by the triangle
    inequality along a lattice path its worst ratio is attained at unit
    steps; only those are scanned.
    """
    condition = Growth(condition)
    if scan_cutoff < 2:
        raise ValueError("scan_cutoff must be >= 2")
    best: Number = Fraction(0)
    violation = None
    for a in range(scan_cutoff + 1):
        for b in range(scan_cutoff + 1):
            if condition is Growth.LINEAR:
                if a + b == 0:
                    continue
                val = _first_moment(family, a, b) / Fraction(a + b)
                witness = {"alpha": a, "beta": b}
                vals = [val]
            elif condition is Growth.BOUNDED:
                vals = [family.total(a, b)]
                witness = {"alpha": a, "beta": b}
            else:
                vals = []
                if a < scan_cutoff:
                    vals.append(_lipschitz_step(family, a, b, a + 1, b))
                if b < scan_cutoff:
                    vals.append(_lipschitz_step(family, a, b, a, b + 1))
                witness = {"alpha": a, "beta": b}
            for v in vals:
                if v > best:
                    best = v
                if violation is None and v > cap:
                    violation = dict(witness, value=v)
    if violation is not None:
        best = math.inf
    return GrowthReport(condition, scan_cutoff, best, violation)
