"""Single-site marginals, fugacity tilting and critical quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath

from .rates import Number, ProcessClass, RateFamily, as_number

DEFAULT_TRUNCATION = 512
DIVERGENCE_BOUND = 1e12
INF = math.inf


class DivergentSeries(ArithmeticError):
    pass


@dataclass(frozen=True)
class TailRule:
    """Analytic continuation of the weights past the stored range.

    ``geometric``: mu(n+1)/mu(n) = param.
    ``gamma_ratio``: mu(n+1)/mu(n) = (n+1-shift)/(n+1-shift+param); the tail of
    the zero-range weights with g_n = 1 + b/n (shift 0) or of the same
    sequence shifted right by one (shift 1).
    ``power``: mu(n) ~ C n^(-param), float tails via the Hurwitz zeta.
    """
    kind: str
    param: Number
    shift: int = 0

    def ratio(self, n: int) -> Number:
        if self.kind == "geometric":
            return self.param
        if self.kind == "gamma_ratio":
            m = n + 1 - self.shift
            return Fraction(m) / (m + self.param) if not isinstance(self.param, float) else m / (m + self.param)
        n = max(n, 1)
        return (n / (n + 1)) ** float(self.param)

    def header(self) -> str:
        extra = f" shift={self.shift}" if self.shift else ""
        return f"# tail: {self.kind} {self.param}{extra}"


@dataclass(frozen=True, eq=False)
class Marginal:
    weights: tuple
    tail: Optional[TailRule] = None
    normalized: bool = False
    source: Optional[Callable[[int], Number]] = field(default=None, repr=False)
    _ext: list = field(default_factory=list, repr=False)

    @property
    def truncation(self) -> int:
        return len(self.weights)

    @property
    def exact(self) -> bool:
        return all(not isinstance(x, float) for x in self.weights)

    def __call__(self, n: int) -> Number:
        return self.weight(n)

    def weight(self, n: int) -> Number:
        if n < 0:
            return Fraction(0)
        T = len(self.weights)
        if n < T:
            return self.weights[n]
        if self.source is not None:
            return self.source(n)
        if self.tail is None:
            raise IndexError(f"weight {n} beyond truncation {T} and no tail rule")
        ext = self._ext
        last = self.weights[-1] if not ext else ext[-1]
        while T + len(ext) <= n:
            i = T + len(ext) - 1
            last = last * self.tail.ratio(i)
            ext.append(last)
        return ext[n - T]

    def scaled(self, c: Number) -> "Marginal":
        src = None if self.source is None else (lambda n, s=self.source: c * s(n))
        return Marginal(tuple(c * x for x in self.weights), self.tail, False, src)

    def to_text(self) -> str:
        lines = [self.tail.header() if self.tail else "# tail: none"]
        lines += [f"{n} {w}" for n, w in enumerate(self.weights)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Marginal":
        tail = None
        weights = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["tail:"] and len(parts) >= 3:
                    shift = 0
                    if len(parts) > 3 and parts[3].startswith("shift="):
                        shift = int(parts[3][6:])
                    tail = TailRule(parts[1], as_number(parts[2]), shift)
                continue
            _, w = line.split()
            weights.append(as_number(w))
        return cls(tuple(weights), tail)


def from_function(fn: Callable[[int], Number], truncation: int = DEFAULT_TRUNCATION,
                  tail: Optional[TailRule] = None, normalized: bool = False) -> Marginal:
    return Marginal(tuple(fn(n) for n in range(truncation)), tail, normalized, fn)


def geometric(ratio: Number, truncation: int = 64, normalized: bool = True) -> Marginal:
    """mu(n) = (1 - ratio) ratio^n (or ratio^n when not normalized)."""
    q = as_number(ratio)
    c = (1 - q) if normalized else 1
    return from_function(lambda n: c * q ** n, truncation, TailRule("geometric", q), normalized)


def ex4_marginal(b: Number, truncation: int = DEFAULT_TRUNCATION) -> Marginal:
    """Weights w(n) = prod_{i<=n} (1+b/i)^{-1} with their exact gamma-ratio tail."""
    from .rates import ex4_weights
    b = as_number(b)
    return from_function(ex4_weights(b), truncation, TailRule("gamma_ratio", b, 0))


def ex4_pi_marginal(b: Number, pi0: Optional[Number] = None,
                    truncation: int = DEFAULT_TRUNCATION) -> Marginal:
    from .rates import ex4_pi
    b = as_number(b)
    return from_function(ex4_pi(b, pi0), truncation, TailRule("gamma_ratio", b, 1))


# ---------------------------------------------------------------------------
# tail sums

def _gamma_tail(mu_n: Number, m: Number, b: Number, moment: int) -> Number:
    """sum_{j>=m} j^moment w(j) for the gamma-ratio weights, given w(m).

    Telescoping: F(j) = w(j)(j+b)R(j) with F(j) - F(j+1) = j^moment w(j).
    """
    if moment == 0:
        if not b > 1:
            raise DivergentSeries("gamma-ratio tail diverges for b <= 1")
        return mu_n * (m + b) / (b - 1)
    if not b > 2:
        raise DivergentSeries("gamma-ratio first moment diverges for b <= 2")
    return mu_n * (m + b) * (m / (b - 2) + 1 / ((b - 1) * (b - 2)))


def tail_sum(mu: Marginal, start: int, phi: Number, moment: int = 0) -> tuple[Number, bool]:
    """sum_{n>=start} n^moment phi^n mu(n) using the tail rule.

    Returns (value, exact).  Raises DivergentSeries when the tail diverges.
    """
    rule = mu.tail
    if rule is None:
        raise DivergentSeries("no tail rule")
    w = mu.weight(start)
    if rule.kind == "geometric":
        x = phi * rule.param
        if not x < 1:
            raise DivergentSeries("geometric tail with phi*ratio >= 1")
        head = w * phi ** start
        if moment == 0:
            return head / (1 - x), True
        return head * (start / (1 - x) + x / (1 - x) ** 2), True
    if phi == 1 and rule.kind == "gamma_ratio":
        b, s = rule.param, rule.shift
        m = start - s
        val = _gamma_tail(w, m, b, moment)
        if moment == 1 and s:
            val = val + s * _gamma_tail(w, m, b, 0)
        return val, not isinstance(val, float)
    if phi == 1 and rule.kind == "power":
        s = float(rule.param)
        if s - moment <= 1:
            raise DivergentSeries("power tail diverges")
        C = float(w) * start ** s
        return C * float(mpmath.zeta(s - moment, start)), False
    if phi > 1:
        raise DivergentSeries("subexponential tail with phi > 1")
    # phi < 1 with a subexponential tail: sum until the geometric bound is small
    phif = float(phi)
    total = 0.0
    n = start
    term = float(w) * phif ** n
    while True:
        total += term * (n ** moment)
        n += 1
        term = float(mu.weight(n)) * phif ** n
        bound = term * (n ** moment) / (1 - phif) ** (moment + 1)
        if bound < 1e-17 * max(total, 1e-300):
            return total, False


def partial_moments(mu: Marginal, phi: Number, upto: Optional[int] = None):
    upto = mu.truncation if upto is None else upto
    z = Fraction(0) if mu.exact and not isinstance(phi, float) else 0.0
    m1 = z
    p = phi ** 0
    for n in range(upto):
        t = p * mu.weight(n)
        z += t
        m1 += n * t
        p *= phi
    return z, m1


# ---------------------------------------------------------------------------

@dataclass
class CriticalProfile:
    phi_c: Number
    method: str
    Z_at_phi_c: Number
    rho_c: Number
    rad_Z_closed: Optional[bool]      # phi_c belongs to the radius of Z
    rad_Zprime_closed: Optional[bool]  # phi_c belongs to the radius of Z'
    verdict: str = "determined"


@dataclass
class TiltedFamily:
    base: Marginal
    phi: Number
    Z: Number
    rho: Number
    exact: bool
    profile: Optional[CriticalProfile] = None
    divergent: bool = False

    def pmf(self, n: int) -> Number:
        if self.divergent:
            raise DivergentSeries("tilt beyond the radius of convergence")
        return self.phi ** n * self.base.weight(n) / self.Z

    @property
    def phi_c(self):
        return None if self.profile is None else self.profile.phi_c

    @property
    def rho_c(self):
        return None if self.profile is None else self.profile.rho_c

    @property
    def Z_at_phi_c(self):
        return None if self.profile is None else self.profile.Z_at_phi_c

    def as_marginal(self, truncation: Optional[int] = None) -> Marginal:
        T = truncation or self.base.truncation
        tail = None
        if self.base.tail is not None and self.base.tail.kind == "geometric":
            tail = TailRule("geometric", self.base.tail.param * self.phi)
        return Marginal(tuple(self.pmf(n) for n in range(T)), tail, True,
                        lambda n: self.pmf(n))


def _sums_at(mu: Marginal, phi: Number, tol: float):
    """(Z, first moment, exact) at fugacity phi, or raise DivergentSeries."""
    T = mu.truncation
    if mu.tail is not None:
        z, m1 = partial_moments(mu, phi, T)
        tz, ez = tail_sum(mu, T, phi, 0)
        try:
            tm, em = tail_sum(mu, T, phi, 1)
        except DivergentSeries:
            tm, em = INF, False
        exact = ez and not isinstance(z, float)
        if not exact:
            z, m1 = float(z), float(m1)
        if tm == INF:
            return z + tz, INF, exact
        if not em:
            return z + tz, float(m1) + tm, exact
        return z + tz, m1 + tm, exact
    # stored weights only (plus source): sum until terms fall below tol
    z, m1 = partial_moments(mu, phi, T)
    n = T
    if mu.source is not None:
        zf, mf = float(z), float(m1)
        while n < 50 * T:
            t = float(phi ** n * mu.weight(n))
            zf += t
            mf += n * t
            if zf > DIVERGENCE_BOUND:
                raise DivergentSeries("partial sums exceed bound")
            if n * t < tol * max(mf, 1e-300) and t < tol * zf:
                return zf, mf, False
            n += 1
        raise DivergentSeries("no convergence within extension budget")
    if float(z) > DIVERGENCE_BOUND:
        raise DivergentSeries("partial sums exceed bound")
    return z, m1, False


def critical_profile(mu: Marginal, tol: float = 1e-12) -> CriticalProfile:
    """phi_c from the limit of mu(n)/mu(n+1), then Z and rho at phi_c."""
    rule = mu.tail
    if rule is not None:
        if rule.kind == "geometric":
            phi_c = 1 / rule.param
            return CriticalProfile(phi_c, "ratio:geometric", INF, INF, False, False)
        phi_c = Fraction(1)
        method = f"ratio:{rule.kind}"
        try:
            Z, m1, _ = _sums_at(mu, phi_c, tol)
        except DivergentSeries:
            return CriticalProfile(phi_c, method, INF, INF, False, False)
        rho = m1 / Z if m1 != INF else INF
        return CriticalProfile(phi_c, method, Z, rho, True, m1 != INF)

    # ratio test on stored weights: fit r_n = phi_c (1 + s/n) at two indices;
    # s is the Raabe exponent (Z finite iff s > 1, first moment iff s > 2)
    w = [float(x) for x in mu.weights]
    T = len(w)
    if T < 16 or any(x <= 0 for x in w[T // 2:]):
        return CriticalProfile(math.nan, "ratio:stored", math.nan, math.nan, None, None, "undetermined")
    ratios = [w[n] / w[n + 1] for n in range(T // 2, T - 1)]
    diffs = [ratios[i + 1] - ratios[i] for i in range(len(ratios) - 1)]
    sign_changes = sum(1 for i in range(len(diffs) - 1)
                       if diffs[i] * diffs[i + 1] < 0 and abs(diffs[i]) > 1e-14)
    if sign_changes > 2:
        return CriticalProfile(math.nan, "ratio:stored", math.nan, math.nan, None, None, "undetermined")
    if max(ratios) - min(ratios) <= 1e-12 * ratios[-1]:
        return CriticalProfile(ratios[-1], "ratio:stored", INF, INF, False, False)
    n1, n2 = T // 2, T - 2
    r1, r2 = ratios[0], ratios[-1]
    if math.log(r2 / r1) / math.log(n2 / n1) > 0.25:
        # ratios grow like a power of n: faster than geometric decay, infinite radius
        return CriticalProfile(INF, "ratio:stored+growth", INF, INF, False, False)
    s = (r2 - r1) / (r1 / n2 - r2 / n1)
    phi_c = r1 / (1 + s / n1)
    z = sum(w[k] * phi_c ** k for k in range(T))
    m1 = sum(k * w[k] * phi_c ** k for k in range(T))
    Z = z if s > 1 else INF
    rho = m1 / z if s > 2 else INF
    return CriticalProfile(phi_c, "ratio:stored+raabe", Z, rho, s > 1, s > 2)


def tilt_and_partition(mu: Marginal, phi: Number, tol: float = 1e-14) -> TiltedFamily:
    """mu_phi(n) = phi^n mu(n) / Z_phi with its partition value and mean."""
    phi = as_number(phi)
    if not phi > 0:
        raise ValueError("phi must be positive")
    prof = critical_profile(mu) if mu.tail is not None else None
    if prof is not None and prof.phi_c == prof.phi_c:  # not nan
        if phi > prof.phi_c or (phi == prof.phi_c and prof.Z_at_phi_c == INF):
            return TiltedFamily(mu, phi, INF, INF, False, prof, divergent=True)
    try:
        Z, m1, exact = _sums_at(mu, phi, tol)
    except DivergentSeries:
        return TiltedFamily(mu, phi, INF, INF, False, prof, divergent=True)
    rho = m1 / Z if m1 != INF else INF
    return TiltedFamily(mu, phi, Z, rho, exact, prof)


# ---------------------------------------------------------------------------
# invariant marginals from rates

class ConstructionRefused(ValueError):
    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (index {index})")
        self.index = index


def _detect_geometric(weights: Sequence[Number]) -> Optional[TailRule]:
    if len(weights) < 20 or any(isinstance(x, float) for x in weights):
        return None
    tail = weights[-16:]
    if any(x == 0 for x in tail):
        return None
    q = tail[1] / tail[0]
    if all(tail[i + 1] == q * tail[i] for i in range(len(tail) - 1)):
        return TailRule("geometric", q)
    return None


def _finish(fn: Callable[[int], Number], truncation: int, tail: Optional[TailRule]) -> Marginal:
    ws = [fn(n) for n in range(truncation)]
    tail = tail or _detect_geometric(ws)
    raw = Marginal(tuple(ws), tail, False, fn if tail is None else None)
    if tail is None:
        return raw
    tf = tilt_and_partition(raw, 1)
    if tf.divergent:
        return raw
    Z = tf.Z
    return Marginal(tuple(x / Z for x in ws), tail, True, None)


def marginal_from_rates(family: RateFamily, phi: Number = 1, truncation: int = 128,
                        tail: Optional[TailRule] = None) -> Marginal:
    """Closed-form single-site marginal mu_phi for the process class of ``family``.

    Returned normalized when a tail rule is known (detected geometric or
    supplied) and the series converges; otherwise unnormalized with mu(0) = 1.
    """
    phi = as_number(phi)
    kind = family.kind
    if kind in (ProcessClass.SINGLE_ZRP, ProcessClass.MMZRP):
        for a in range(1, truncation + 1):
            if not family(1, a, 0) > 0:
                raise ConstructionRefused("zero-range marginal needs g^1_a > 0", a)
        step = lambda a: phi / family(1, a, 0)
    elif kind is ProcessClass.SINGLE_TP:
        for j in range(truncation):
            if not family(1, 1, j) > 0:
                raise ConstructionRefused("target marginal needs g^1_{*,j} > 0", j)
        step = lambda a: phi * family(1, 1, a - 1)
    elif kind is ProcessClass.SINGLE_MP:
        for a in range(1, truncation):
            if not family(1, 1, a - 1) > 0:
                raise ConstructionRefused("misanthrope marginal needs g^1_{1,a} > 0", a - 1)
            if not family(1, a, 0) > 0:
                raise ConstructionRefused("misanthrope marginal needs g^1_{a,0} > 0", a)
        step = lambda a: phi * family(1, 1, a - 1) / family(1, a, 0)
    elif kind is ProcessClass.MMTP:
        from .invariance import w_from_mmtp_rates
        cache = {"w": w_from_mmtp_rates(family, truncation - 1)}

        def step(a):
            w = cache["w"]
            if a >= w.truncation:
                w = cache["w"] = w_from_mmtp_rates(family, 2 * a)
            return phi * w.weight(a) / w.weight(a - 1)
    else:
        raise ValueError(f"no closed-form marginal for class {kind.value}")
    prods = [phi ** 0]

    def fn(n):
        while len(prods) <= n:
            prods.append(prods[-1] * step(len(prods)))
        return prods[n]

    return _finish(fn, truncation, tail)


def asymmetric_tp_marginal(g0: Number, g1: Number, x: Number, truncation: int = 64) -> Marginal:
    """Normalized marginal of the asymmetric target process with
    g^1_{*,0} = g0 and g^1_{*,b} = g1 for b > 0, at effective fugacity x.

    mu(a) = mu(0) x^a g0 g1^(a-1) for a >= 1; mu(0) fixed by normalization.
    """
    g0, g1, x = as_number(g0), as_number(g1), as_number(x)
    if not x * g1 < 1:
        raise DivergentSeries("x * g1 >= 1")
    mu0 = (1 - x * g1) / (1 + x * (g0 - g1))
    fn = lambda a: mu0 if a == 0 else mu0 * x ** a * g0 * g1 ** (a - 1)
    return from_function(fn, truncation, TailRule("geometric", x * g1), normalized=True)
