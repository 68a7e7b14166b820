import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from mmp.attractiveness import (check_attractiveness, check_product_shape_attractiveness, ex4_ratio,
                                f_diagnostic, f_value, mmzrp_failures_partial, mmzrp_failures_sigma,
                                tail_sums)
from mmp.invariance import build_mmtp_rates
from mmp.measures import INF, critical_profile, ex4_marginal, geometric, marginal_from_rates
from mmp.rates import ex4_pi, make_builtin
from test_rates import BUILTINS


def test_tail_sum_examples():
    ex1 = tail_sums(make_builtin("ex1_h", {}), 10)
    stick = tail_sums(make_builtin("stick"), 10)
    for a in range(11):
        for k in range(a + 3):
            assert ex1(k, a, 2) == sum((F(1, j) for j in range(k + 1, a + 1)), F(0))
            assert stick(k, a, 5) == max(a - k, 0)


@pytest.mark.parametrize("name,p", BUILTINS)
def test_tail_sums_nonincreasing_in_k(name, p):
    S = tail_sums(make_builtin(name, p), 8)
    for a in range(9):
        for b in range(9):
            row = [S(k, a, b) for k in range(a + 1)]
            if a:
                assert row[-1] == 0
            assert all(row[i] >= row[i + 1] for i in range(len(row) - 1))


def test_verdict_examples():
    assert check_attractiveness(make_builtin("ex1_h", {"h": "inv"})).passed
    assert check_attractiveness(make_builtin("qhahn", {"q": "1/2"})).passed
    v = check_attractiveness(make_builtin("ex1_h", {"h": "k_then_inv:3"}))
    assert not v.passed and v.witness is not None and v.note.startswith("certified")


@pytest.mark.parametrize("name,p", [b for b in BUILTINS if b[0] not in ("single_tp", "single_mp", "table")])
def test_equivalent_zero_range_forms_agree(name, p):
    f = make_builtin(name, p)
    assert mmzrp_failures_sigma(f, 20) == mmzrp_failures_partial(f, 20)


def test_general_check_on_misanthrope():
    good = make_builtin("single_mp", {"g": lambda a, b: F(a + 1, 1) / (b + 1)})
    bad = make_builtin("single_mp", {"g": lambda a, b: F(1, a) * (b + 1)})
    assert check_attractiveness(good, 10).passed
    v = check_attractiveness(bad, 10)
    assert not v.passed and v.witness["condition"] in ("departure", "arrival")


def test_target_check():
    assert check_attractiveness(make_builtin("single_tp", {"g": lambda b: F(1, b + 1)}), 10).passed
    assert not check_attractiveness(make_builtin("single_tp", {"g": lambda b: F(b + 1)}), 10).passed


def test_F_small_alpha_closed_forms():
    for b in (F(1), F(3, 2), F(2), F(5)):
        assert f_value(ex4_ratio(b), 2) == 1 / (2 * (1 + b))
    for b in (F(1), F(2), F(5), F(7), F(10)):
        assert f_value(ex4_ratio(b), 3) == (6 + 3 * b - b * b) / (6 * (2 + b) * (1 + b))
        if b >= 5:
            assert f_value(ex4_ratio(b), 3) < 0
    assert f_value(ex4_ratio(2), 3) == F(1, 9)


def _f_oracle(b, a):
    # nonnegativity of the tail-sum condition, rescaled; same sign and zero set as F
    pi = ex4_pi(b)
    left = sum((pi(i) * pi(a + 1 - i) for i in range(1, a + 1)), F(0)) / pi(a + 1)
    right = sum((pi(i) * pi(a - i) for i in range(1, a)), F(0)) / pi(a)
    return (left - right) / (2 * pi(1) * ex4_ratio(b)(a - 1))


@pytest.mark.parametrize("b", [F(1), F(3, 2), F(2), F(3), F(5)])
def test_F_matches_independent_oracle(b):
    for a in range(2, 30):
        assert f_value(ex4_ratio(b), a) == _f_oracle(b, a)


def test_F2_sign_change():
    F2 = f_diagnostic(ex4_ratio(2), 40)
    assert F2[9] == F(1, 9450)
    assert F2[10] < 0
    assert all(F2[a] < 0 for a in range(11, 41))


def test_F1_positive():
    assert all(v > 0 for v in f_diagnostic(ex4_ratio(1), 200).values())


def test_F_undefined_below_two():
    with pytest.raises(ValueError):
        f_value(ex4_ratio(1), 1)


@pytest.mark.parametrize("b", [F(1), F(3, 2), F(2), F(3), F(5)])
@pytest.mark.parametrize("cutoff", [4, 8, 9, 10, 12, 15])
def test_F_nonnegative_iff_attractive(b, cutoff):
    fam = make_builtin("ex3_pi_h", {"pi": ex4_pi(b)})
    min_F = min(f_diagnostic(ex4_ratio(b), cutoff).values())
    assert check_attractiveness(fam, cutoff).passed == (min_F >= 0)


def test_product_shape_examples():
    assert check_product_shape_attractiveness(ex4_pi(1), "pi", 30).passed
    v = check_product_shape_attractiveness(ex4_pi(5), "pi", 30)
    assert not v.passed and v.details["r_direction"] == "nonincreasing"
    assert v.details["at2_first_failure"] == 3 or v.witness == {"alpha": 3}
    # constant pi gives g^k = h(k): the same verdicts as ex1_h
    for h in ("inv", "k_then_inv:3", "one"):
        shaped = check_product_shape_attractiveness(lambda n: F(1), h, 30)
        assert shaped.passed == check_attractiveness(make_builtin("ex1_h", {"h": h}), 30).passed


@pytest.mark.parametrize("b,witness", [(5, 3), (3, 5), (2, 10)])
def test_sign_lattice_failing_pi_constrains_every_h(b, witness):
    pi = ex4_pi(b)
    v = check_attractiveness(make_builtin("ex3_pi_h", {"pi": pi}), 15)
    assert not v.passed and v.witness == {"alpha": witness}
    rng = random.Random(7)
    for _ in range(40):
        vals = [F(rng.randint(1, 30), rng.randint(1, 30)) for _ in range(20)]
        if rng.random() < 0.5:
            vals.sort(reverse=True)
        h = lambda k, vals=vals: vals[k]
        assert not check_attractiveness(make_builtin("ex3_pi_h", {"pi": pi, "h": h}), 15).passed


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=12, max_size=12))
def test_product_shape_agrees_with_general_check(hs):
    h = lambda k: F(hs[k], k + 1)
    pi = ex4_pi(1)
    v = check_product_shape_attractiveness(pi, h, 10)
    assert v.passed == v.details["general_check"]


ATTRACTIVE_INVARIANT = [
    make_builtin("single_zrp", {"g": lambda a: 2 - F(1, a)}),
    make_builtin("single_zrp", {"g": "one"}),
    make_builtin("single_zrp", {"g": "n"}),
    make_builtin("single_mp", {"g": lambda a, b: (2 - F(1, a)) * F(b + 2, b + 1)}),
    make_builtin("single_tp", {"g": lambda b: F(2) if b == 0 else F(1)}),
    build_mmtp_rates(geometric(F(1, 2)), lambda k: F(1, k), 12),
]


@pytest.mark.parametrize("fam", ATTRACTIVE_INVARIANT, ids=lambda f: f.kind.value)
def test_attractive_and_invariant_means_divergent_Z(fam):
    assert check_attractiveness(fam, 15).passed
    prof = critical_profile(marginal_from_rates(fam, 1, 128))
    assert prof.verdict == "determined" and prof.Z_at_phi_c == INF


def test_non_attractive_zrp_can_condense():
    fam = make_builtin("single_zrp", {"g": lambda a: 1 + F(3, a)})
    assert not check_attractiveness(fam, 15).passed
    assert critical_profile(ex4_marginal(3)).Z_at_phi_c < INF
