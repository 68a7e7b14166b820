"""Tail sums, attractiveness checks per process class and the F diagnostic."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Optional

from .rates import Number, ProcessClass, RateFamily, sequence_from_spec
from .verdict import Verdict


class TailTable:
    """Sigma^k_{a,b} = sum_{k' > k} g^{k'}_{a,b}, memoized per (a, b)."""

    def __init__(self, family: RateFamily, cutoff: int):
        self.family = family
        self.cutoff = cutoff
        self._rows: dict = {}

    def row(self, a: int, b: int) -> list:
        """[Sigma^0, ..., Sigma^a] at (a, b)."""
        key = (a, b)
        r = self._rows.get(key)
        if r is None:
            r = [Fraction(0)] * (a + 1)
            acc = Fraction(0)
            for k in range(a, 0, -1):
                r[k] = acc
                acc = acc + self.family(k, a, b)
            r[0] = acc
            self._rows[key] = r
        return r

    def __call__(self, k: int, a: int, b: int) -> Number:
        if k >= a:
            return Fraction(0)
        return self.row(a, b)[max(k, 0)]


def tail_sums(family: RateFamily, cutoff: int) -> TailTable:
    t = TailTable(family, cutoff)
    for a in range(cutoff + 1):
        for b in range(cutoff + 1):
            t.row(a, b)
    return t


def _general_check(S: TailTable, cutoff: int) -> Verdict:
    for a in range(1, cutoff + 1):
        for b in range(cutoff + 1):
            for k in range(a + 1):
                lo, mid, hi = S(k + 1, a + 1, b), S(k, a, b), S(k, a + 1, b)
                if not lo <= mid <= hi:
                    return Verdict("attractiveness", False, cutoff, hi - mid if mid > hi else mid - lo,
                                   {"condition": "departure", "alpha": a, "beta": b, "k": k})
                lo, mid, hi = S(k + 1, a, b), S(k, a, b + 1), S(k, a, b)
                if not lo <= mid <= hi:
                    return Verdict("attractiveness", False, cutoff, hi - mid if mid > hi else mid - lo,
                                   {"condition": "arrival", "alpha": a, "beta": b, "k": k})
    return Verdict("attractiveness", True, cutoff)


def mmzrp_failures_sigma(family: RateFamily, cutoff: int) -> list:
    """alpha values where the tail-sum form fails for some k."""
    g = lambda k, a: family(k, a, 0)
    bad = []
    for a in range(1, cutoff + 1):
        for k in range(0, a + 1):
            left = sum((g(kp, a + 1) for kp in range(k + 2, a + 2)), Fraction(0))
            mid = sum((g(kp, a) for kp in range(k + 1, a + 1)), Fraction(0))
            right = sum((g(kp, a + 1) for kp in range(k + 1, a + 2)), Fraction(0))
            if not left <= mid <= right:
                bad.append(a)
                break
    return bad


def mmzrp_failures_partial(family: RateFamily, cutoff: int) -> list:
    """alpha values where the re-indexed partial-sum form fails for some m."""
    g = lambda k, a: family(k, a, 0)
    bad = []
    for a in range(1, cutoff + 1):
        acc = Fraction(0)
        for m in range(1, a + 1):
            j = m - 1
            acc += g(a - j, a) - g(a + 1 - j, a + 1)
            if not 0 <= acc <= g(a + 1 - m, a + 1):
                bad.append(a)
                break
    return bad


def _mmtp_check(family: RateFamily, cutoff: int) -> Verdict:
    g = lambda k, b: family(k, k, b)
    for a in range(1, cutoff + 1):
        for b in range(cutoff + 1):
            if g(a + 1, b) > g(a, b):
                return Verdict("attractiveness", False, cutoff, g(a + 1, b) - g(a, b),
                               {"condition": "size", "alpha": a, "beta": b})
            if g(a, b + 1) > g(a, b):
                return Verdict("attractiveness", False, cutoff, g(a, b + 1) - g(a, b),
                               {"condition": "arrival", "alpha": a, "beta": b})
            for k in range(a + 1):
                lhs = sum((g(kp, b) for kp in range(k + 2, a + 1)), Fraction(0))
                rhs = sum((g(kp, b + 1) for kp in range(k + 1, a + 1)), Fraction(0))
                if lhs > rhs:
                    return Verdict("attractiveness", False, cutoff, lhs - rhs,
                                   {"condition": "tail", "alpha": a, "beta": b, "k": k})
    return Verdict("attractiveness", True, cutoff)


def check_attractiveness(family: RateFamily, cutoff: int = 20) -> Verdict:
    kind = family.kind
    if kind in (ProcessClass.MMZRP, ProcessClass.SINGLE_ZRP):
        sig = mmzrp_failures_sigma(family, cutoff)
        part = mmzrp_failures_partial(family, cutoff)
        v = Verdict("attractiveness", not sig, cutoff,
                    witness={"alpha": sig[0]} if sig else None,
                    details={"failing_alpha": sig, "partial_form_failing_alpha": part,
                             "forms_agree": sig == part})
        if sig != part:
            raise AssertionError(f"equivalent forms disagree: {sig} vs {part}")
        return v
    if kind in (ProcessClass.MMTP, ProcessClass.SINGLE_TP):
        v = _mmtp_check(family, cutoff)
        v.details["general_form"] = _general_check(TailTable(family, cutoff), cutoff).passed
        return v
    return _general_check(TailTable(family, cutoff), cutoff)


# ---------------------------------------------------------------------------
# product-shape families g^k_a = pi(a-k) h(k) / pi(a)

def _monotone(seq: list) -> Optional[str]:
    inc = all(seq[i] <= seq[i + 1] for i in range(len(seq) - 1))
    dec = all(seq[i] >= seq[i + 1] for i in range(len(seq) - 1))
    if dec:
        return "nonincreasing"
    if inc:
        return "nondecreasing"
    return None


def check_product_shape_attractiveness(pi: Callable[[int], Number], h: Callable[[int], Number] | str,
                                       cutoff: int = 30) -> Verdict:
    h = pi if h == "pi" else sequence_from_spec(h)
    r = [pi(n) / pi(n + 1) for n in range(cutoff + 2)]
    direction = _monotone(r)
    from .rates import make_builtin
    family = make_builtin("ex3_pi_h", {"pi": pi, "h": h})
    general = check_attractiveness(family, cutoff)
    details = {"r_direction": direction, "general_check": general.passed}

    at1 = next((a for a in range(1, cutoff + 1) if h(a + 1) / pi(a + 1) > h(a) / pi(a)), None)
    details["at1_first_failure"] = at1

    if direction == "nonincreasing":
        at2 = None
        for a in range(1, cutoff + 1):
            lhs = sum((h(k) * (pi(a - k) / pi(a) - pi(a - k + 1) / pi(a + 1)) for k in range(1, a + 1)),
                      Fraction(0))
            if lhs > pi(0) * h(a + 1) / pi(a + 1):
                at2 = a
                break
        at3 = None
        for a in range(2, cutoff + 1):
            lhs = sum((pi(i) * pi(a - i) for i in range(1, a)), Fraction(0)) / pi(a)
            rhs = sum((pi(i) * pi(a + 1 - i) for i in range(1, a + 1)), Fraction(0)) / pi(a + 1)
            if lhs > rhs:
                at3 = a
                break
        details.update(at2_first_failure=at2, at3_first_failure=at3)
        passed = at1 is None and at2 is None
        witness = None if passed else {"alpha": at1 if at1 is not None else at2}
        if passed != general.passed:
            raise AssertionError("product-shape verdict disagrees with the general check")
        return Verdict("product_shape_attractiveness", passed, cutoff, witness=witness, details=details)

    if direction == "nondecreasing":
        atbis = None
        for a in range(1, cutoff + 1):
            bound = max(h(k + 1) / h(k) for k in range(1, a + 1))
            if pi(a + 1) / pi(a) < bound:
                atbis = a
                break
        details["at_bis1_first_failure"] = atbis
        if at1 is not None:
            passed = False
        elif atbis is None:
            passed = True
        else:
            passed = general.passed
            details["notice"] = "sufficient condition inconclusive; general check used"
        if passed != general.passed:
            raise AssertionError("product-shape verdict disagrees with the general check")
        return Verdict("product_shape_attractiveness", passed, cutoff,
                       witness=None if passed else (general.witness or {"alpha": at1}), details=details)

    details["notice"] = "ratio sequence not monotone; general check used"
    return Verdict("product_shape_attractiveness", general.passed, cutoff, witness=general.witness,
                   details=details)


def _prod(r, lo: int, hi: int) -> Number:
    out = Fraction(1)
    for i in range(lo, hi + 1):
        out = out * r(i)
    return out


def f_value(r: Callable[[int], Number], a: int) -> Number:
    if a < 2:
        raise ValueError("F is defined for alpha >= 2")
    if a == 2:
        return Fraction(-1, 2) + r(2) / r(1)
    if a == 3:
        return -1 + r(3) / r(2) + Fraction(1, 2) * r(3) / r(1)
    half = Fraction(1, 2)
    if a % 2 == 0:
        m = a // 2
        P = sum((_prod(r, a - i, a - 2) / _prod(r, 1, i - 1) for i in range(2, m + 1)), Fraction(0))
        Q = sum((_prod(r, a - i + 1, a - 1) / _prod(r, 1, i - 1) for i in range(2, m + 1)), Fraction(0))
        return (-1 - P + half * _prod(r, m, a - 2) / _prod(r, 1, m - 1)
                + r(a) / r(a - 1) * (1 + Q))
    m = (a - 1) // 2
    P = sum((_prod(r, a - i, a - 2) / _prod(r, 1, i - 1) for i in range(2, m + 1)), Fraction(0))
    Q = sum((_prod(r, a - i + 1, a - 1) / _prod(r, 1, i - 1) for i in range(2, m + 1)), Fraction(0))
    return -1 - P + r(a) / r(a - 1) * (1 + Q + half * _prod(r, (a + 1) // 2, a - 1) / _prod(r, 1, m))


def f_diagnostic(r: Callable[[int], Number], alpha_max: int) -> dict:
    return {a: f_value(r, a) for a in range(2, alpha_max + 1)}


def ex4_ratio(b) -> Callable[[int], Number]:
    """r(n) = 1 + b/n."""
    from .rates import as_number
    b = as_number(b)
    return lambda n: 1 + b / n
