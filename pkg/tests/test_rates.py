import itertools
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from mmp.rates import (Growth, ProcessClass, as_number, check_growth, ex4_pi, ex4_weights,
                       make_builtin, sequence_from_spec)

BUILTINS = [
    ("ex1_h", {}),
    ("ex1_h", {"h": "k_then_inv:3"}),
    ("stick", {}),
    ("ex2_r", {"r": "inv"}),
    ("qhahn", {"q": "1/2"}),
    ("ex3_pi_h", {"pi": "geometric:1/2"}),
    ("ex4_b_family", {"b": 2}),
    ("ex4_b_family", {"b": "3/2", "h": "pi_over_k"}),
    ("ex4_b_family", {"b": 3, "measure": "example4"}),
    ("single_zrp", {"g": "inv"}),
    ("single_tp", {"g": "n"}),
    ("single_mp", {"g": lambda a, b: F(a, b + 1)}),
    ("table", {"entries": {(1, 1, 0): 2, (2, 2, 1): "1/3"}, "default": 0}),
]


def test_ex1_inverse_h():
    f = make_builtin("ex1_h", {"h": "inv"})
    assert f(2, 5, 7) == F(1, 2)


def test_jump_larger_than_occupancy_is_zero():
    for name, p in BUILTINS:
        assert make_builtin(name, p)(4, 3, 0) == 0


def test_qhahn_value():
    # h(k) = q^{k-1}(1-q)/(1-q^k) at q = 1/2, k = 2
    assert make_builtin("qhahn", {"q": "1/2"})(2, 3, 9) == F(1, 3)


def test_ex4_single_jump_rate():
    f = make_builtin("ex4_b_family", {"b": 2})
    for a in range(1, 30):
        assert f(1, a, 0) == 1 + F(2, a)


def test_stick_unit_rates():
    f = make_builtin("stick")
    assert all(f(k, a, 3) == 1 for a in range(1, 12) for k in range(1, a + 1))


def test_ex3_geometric_product_shape():
    q = F(1, 3)
    f = make_builtin("ex3_pi_h", {"pi": "geometric:1/3"})
    for a in range(1, 10):
        for k in range(1, a + 1):
            assert f(k, a, 0) == q ** k * q ** (a - k) / q ** a


@pytest.mark.parametrize("name,p", BUILTINS)
def test_support_exhaustive(name, p):
    f = make_builtin(name, p)
    for a, b in itertools.product(range(31), range(31)):
        assert f(0, a, b) == 0
        for k in range(a + 1, a + 3):
            assert f(k, a, b) == 0
        if a == 0:
            assert all(f(k, 0, b) == 0 for k in range(4))
    if f.kind.single_jump:
        assert all(f(2, a, b) == 0 for a in range(2, 10) for b in range(5))


@pytest.mark.parametrize("name,p", BUILTINS)
def test_class_invariance(name, p):
    f = make_builtin(name, p)
    for a in range(1, 10):
        for k in range(1, a + 1):
            vals = [f(k, a, b) for b in range(8)]
            assert all(v >= 0 for v in vals)
            if f.kind.departure_only:
                assert len(set(vals)) == 1
    if f.kind.arrival_only:
        for b in range(8):
            for k in range(1, 6):
                assert len({f(k, a, b) for a in range(k, 12)}) == 1


def test_unknown_builtin_and_ranges():
    with pytest.raises(ValueError):
        make_builtin("nope")
    with pytest.raises(ValueError):
        make_builtin("ex4_b_family", {"b": 1})
    with pytest.raises(ValueError):
        make_builtin("qhahn", {"q": 1})


def test_negative_raw_rate_rejected():
    f = make_builtin("table", {"entries": {(1, 1, 0): -1}})
    with pytest.raises(ValueError):
        f(1, 1, 0)


def test_as_number():
    assert as_number("3/2") == F(3, 2)
    assert as_number(4) == F(4)
    assert isinstance(as_number(0.5), float)
    with pytest.raises(TypeError):
        as_number(True)


def test_sequences():
    assert sequence_from_spec("k_then_inv:3")(2) == 2
    assert sequence_from_spec("k_then_inv:3")(4) == F(1, 4)
    assert sequence_from_spec("3/4")(9) == F(3, 4)
    with pytest.raises(ValueError):
        sequence_from_spec("bogus")


def test_ex4_weight_conventions():
    b = F(5, 2)
    pi, w = ex4_pi(b), ex4_weights(b)
    assert pi(1) == 1 and pi(0) == 1 + b
    for n in range(1, 20):
        assert pi(n) / pi(n + 1) == 1 + b / n
        assert w(n) == pi(n + 1)  # both have pi(1) = w(0) = 1


def test_ex4_gamma_form():
    # pi(n) = Gamma(n) Gamma(b+1) / Gamma(b+n), checked independently with lgamma
    b = 2.5
    pi = ex4_pi(b)
    for n in (1, 2, 5, 40, 300):
        ref = math.exp(math.lgamma(n) + math.lgamma(b + 1) - math.lgamma(b + n))
        assert math.isclose(pi(n), ref, rel_tol=1e-10)


def test_ex4_power_law_bounds():
    b = 2.0
    pi = ex4_pi(b)
    ratios = [pi(n) * n ** b for n in range(1, 10_001)]
    lo, hi = 1.0, math.gamma(b + 1)  # omega_1, omega_2
    assert all(lo - 1e-12 <= r <= hi + 1e-12 for r in ratios)


def test_growth_ex1_linear():
    rep = check_growth(make_builtin("ex1_h", {}), Growth.LINEAR, scan_cutoff=50)
    assert rep.passed and rep.best_constant == 1
    assert "scanned range" in rep.note


def test_growth_stick_linear_violation():
    # sum_k k / alpha = (alpha+1)/2 at beta = 0; cap 10 first broken at alpha = 20
    rep = check_growth(make_builtin("stick"), "LinearGrowth", cap=10, scan_cutoff=30)
    assert not rep.passed
    assert rep.best_constant == math.inf
    assert rep.violation["alpha"] == 20 and rep.violation["beta"] == 0


def test_growth_ex4_lipschitz_finite():
    rep = check_growth(make_builtin("ex4_b_family", {"b": 2, "h": "pi_over_k"}), "LipschitzJump", scan_cutoff=20)
    assert rep.passed and rep.best_constant < math.inf


def _brute_lipschitz(f, cutoff):
    best = F(0)
    pts = list(itertools.product(range(cutoff + 1), repeat=2))
    for (a, b), (c, d) in itertools.product(pts, pts):
        if (a, b) == (c, d):
            continue
        top = max(a, c)
        lhs = sum((k * abs(f(k, a, b) - f(k, c, d)) for k in range(1, top + 1)), F(0))
        best = max(best, lhs / (abs(a - c) + abs(b - d)))
    return best


@pytest.mark.parametrize("name,p", [("ex1_h", {}), ("ex4_b_family", {"b": 2}), ("single_tp", {"g": lambda j: F(1, j + 1)}),
                                    ("single_mp", {"g": lambda a, b: F(a + 1, b + 2)})])
def test_lipschitz_unit_steps_match_brute_force(name, p):
    f = make_builtin(name, p)
    assert check_growth(f, "LipschitzJump", scan_cutoff=5).best_constant == _brute_lipschitz(f, 5)


@pytest.mark.parametrize("name,p", BUILTINS)
def test_bounded_implies_linear(name, p):
    f = make_builtin(name, p)
    bt = check_growth(f, "BoundedTotal", cap=100, scan_cutoff=12)
    if bt.passed:
        lin = check_growth(f, "LinearGrowth", cap=bt.best_constant, scan_cutoff=12)
        assert lin.passed


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8))
def test_growth_constant_monotone_in_cutoff(c1, c2):
    f = make_builtin("qhahn", {"q": "1/3"})
    lo, hi = sorted((c1, c2))
    assert check_growth(f, "LinearGrowth", scan_cutoff=lo).best_constant <= \
        check_growth(f, "LinearGrowth", scan_cutoff=hi).best_constant


def test_process_class_flags():
    assert ProcessClass.MMZRP.departure_only and not ProcessClass.MMZRP.single_jump
    assert ProcessClass.SINGLE_TP.arrival_only and ProcessClass.SINGLE_TP.single_jump
