from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from mmp.condensation import build_canonical
from mmp.invariance import (GuardExceeded, NegativeRate, build_h_table, build_mmtp_rates,
                            build_mmzrp_rates, check_mmzrp_invariance, check_product_invariance,
                            check_single_jump_balance, compute_A, exact_stationarity_check,
                            exact_stationary_law, simplex_states, w_from_mmtp_rates)
from mmp.lattice import Kernel
from mmp.measures import Marginal, ex4_marginal, from_function, geometric, marginal_from_rates, tilt_and_partition
from mmp.rates import make_builtin

TASEP = Kernel.totally_asymmetric(1)


def test_single_jump_zrp_A_is_rate_difference():
    g = lambda a: 1 + F(2, a)
    fam = make_builtin("single_zrp", {"g": g})
    mu = marginal_from_rates(fam, 1, 80)
    A = compute_A(fam, mu, 30)
    rate = lambda a: fam(1, a, 0) if a else 0
    assert all(A(a, b) == rate(b) - rate(a) for a in range(31) for b in range(31))
    v = check_product_invariance(A, "asymmetric")
    assert v.passed and v.details["psi"] == [rate(b) for b in range(31)]
    assert "cutoff 30" in v.note


def test_ex1_psi_is_partial_sum_of_h():
    fam = make_builtin("ex1_h", {"h": "inv"})
    A = compute_A(fam, geometric(F(1, 3)), 20)
    harmonic = [sum((F(1, k) for k in range(1, a + 1)), F(0)) for a in range(21)]
    assert A.psi == harmonic
    assert check_product_invariance(A, "asymmetric").passed


@pytest.mark.parametrize("fam,mu", [
    (make_builtin("ex1_h", {}), geometric(F(1, 2))),
    (make_builtin("qhahn", {"q": "1/2"}), geometric(F(1, 4))),
    (build_mmzrp_rates(ex4_marginal(2), lambda k: F(1, k)), ex4_marginal(2)),
])
def test_diagonal_vanishes_for_invariant_pairs(fam, mu):
    A = compute_A(fam, mu, 12)
    assert check_product_invariance(A, "asymmetric").passed
    assert all(A(a, a) == 0 for a in range(13))


def test_ex2_fails_both_conditions():
    A = compute_A(make_builtin("ex2_r", {"r": "inv"}), geometric(F(1, 3)), 12)
    asym = check_product_invariance(A, "asymmetric")
    assert not asym.passed and asym.witness is not None
    assert not check_product_invariance(A, "symmetric").passed


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["ex1_h", "stick", "ex2_r", "qhahn"]),
       st.fractions(F(1, 9), F(8, 9), max_denominator=9),
       st.fractions(F(1, 5), F(3, 1), max_denominator=5))
def test_A_tilt_invariant_and_psi_implies_antisymmetry(name, ratio, phi):
    fam = make_builtin(name, {"r": "inv"} if name == "ex2_r" else {})
    mu = geometric(ratio, normalized=False)
    if phi * ratio >= 1:
        return
    A = compute_A(fam, mu, 8)
    At = compute_A(fam, tilt_and_partition(mu, phi).as_marginal(), 8)
    assert A.grid == At.grid
    if check_product_invariance(A, "asymmetric").passed:
        assert check_product_invariance(A, "symmetric").passed


def test_zero_weight_refused():
    with pytest.raises(ValueError):
        compute_A(make_builtin("stick"), Marginal((F(1), F(0), F(1))), 1)


def test_single_jump_zrp_balance_identically():
    fam = make_builtin("single_zrp", {"g": lambda a: F(a + 3, a + 1)})
    v = check_single_jump_balance(fam, marginal_from_rates(fam, 1, 40), 12)
    assert v.passed
    assert v.details["compat"].passed and v.details["inv_psi"].passed


def test_asymmetric_tp_inv_psi():
    const = make_builtin("single_tp", {"g": lambda b: F(2) if b == 0 else F(1, 2)})
    assert check_single_jump_balance(const, geometric(F(1, 3)), 10).details["inv_psi"].passed
    varying = make_builtin("single_tp", {"g": lambda b: F(1, b + 1)})
    assert not check_single_jump_balance(varying, geometric(F(1, 3)), 10).details["inv_psi"].passed


def test_mmzrp_invariance_examples():
    assert check_mmzrp_invariance(make_builtin("ex1_h", {}), geometric(F(2, 5)), 15).passed
    fam = make_builtin("ex4_b_family", {"b": 2})
    assert check_mmzrp_invariance(fam, ex4_marginal(2), 15).passed
    v = check_mmzrp_invariance(make_builtin("stick"), ex4_marginal(2), 10)
    assert not v.passed and v.witness == {"k": 1, "alpha": 2}
    # the stick process is ex1_h with h = 1, so geometric weights are invariant
    assert check_mmzrp_invariance(make_builtin("stick"), geometric(F(1, 2)), 10).passed


def test_build_mmzrp_rates_examples():
    g = build_mmzrp_rates(ex4_marginal(2), {1: 1})
    assert all(g(1, a, 0) == 1 + F(2, a) for a in range(1, 25))
    g3 = build_mmzrp_rates(ex4_marginal(3), {2: 1})
    assert g3(2, 3, 0) == 5
    geo = build_mmzrp_rates(geometric(F(1, 3)), lambda k: 1)
    assert all(geo(k, a, 0) == 3 ** k for a in range(1, 10) for k in range(1, a + 1))


@pytest.mark.parametrize("c", [lambda k: F(1, k), lambda k: F(1), lambda k: F(k * k, 3)])
def test_built_mmzrp_round_trips(c):
    mu = ex4_marginal(F(5, 2))
    fam = build_mmzrp_rates(mu, c, 12)
    v = check_mmzrp_invariance(fam, mu, 12)
    assert v.passed and v.details["rate_only"].passed


@settings(max_examples=10, deadline=None)
@given(st.lists(st.fractions(F(1, 20), F(5), max_denominator=20), min_size=16, max_size=16))
def test_h_table_identities(ws):
    ht = build_h_table(Marginal(tuple(ws)), 7)
    assert ht.verified_dual and ht.verified_psi_identity and ht.verified_expansion
    for a in range(1, 8):
        for b in range(1, 8):
            assert ht.H(a, b, b) == ht.delta(a, b) * ws[0]
            if b >= 2:
                assert ht.H(a, b, b - 1) == ht.delta(a, b - 1) * ws[1] + ht.delta(a, 1) * ht.delta(1, b - 1) * ws[0]


def test_h_table_vanishes_for_geometric():
    ht = build_h_table(geometric(F(2, 7), normalized=False), 10)
    assert all(v == 0 for v in ht.grid().values())
    assert ht.verified_psi_identity
    assert ht.to_text().splitlines()[0] == "1 1 1 0"


def test_mmtp_geometric_rates_constant_in_target():
    fam = build_mmtp_rates(geometric(F(1, 2)), lambda k: F(1, k), 8)
    assert all(fam(a, a, b) == F(1, a) for a in range(1, 9) for b in range(9))


@pytest.mark.parametrize("mu", [ex4_marginal(2), from_function(lambda n: F(1, 3) ** n / (n + 1), 40)])
@pytest.mark.parametrize("g0", [lambda k: F(1, k), lambda k: F(1), lambda k: F(k)])
def test_mmtp_build_and_round_trip(mu, g0):
    fam = build_mmtp_rates(mu, g0, 10)
    A = compute_A(fam, mu, 6)
    assert check_product_invariance(A, "asymmetric").passed
    w = w_from_mmtp_rates(fam, 10)
    steps = {w.weight(n + 1) * mu.weight(n) / (w.weight(n) * mu.weight(n + 1)) for n in range(10)}
    assert len(steps) == 1  # w = const * phi^n * mu


def test_mmtp_negative_rate_refused():
    mu = from_function(lambda n: (n + 1) * F(1, 3) ** n, 40)
    with pytest.raises(NegativeRate) as e:
        build_mmtp_rates(mu, lambda k: F(1, k), 12)
    assert e.value.value < 0


def test_w_from_single_jump_tp():
    # target rates constant for beta >= 1: the product of the rates below alpha
    g = lambda b: F(3) if b == 0 else F(1, 2)
    w = w_from_mmtp_rates(make_builtin("single_tp", {"g": g}), 8)
    prod = F(1)
    for a in range(9):
        assert w.weight(a) == prod
        prod *= g(a)


def test_w_from_rates_refuses_nonpositive_partial_sum():
    fam = make_builtin("table", {"entries": {(1, 1, 0): 1, (1, 1, 1): 1, (2, 2, 0): 3, (2, 2, 1): 1},
                                 "kind": "mm-tp"})
    with pytest.raises(ValueError, match="alpha=2"):
        w_from_mmtp_rates(fam, 5)


def test_stationarity_acceptance_configuration():
    mu = ex4_marginal(2)
    fam = build_mmzrp_rates(mu, lambda k: F(1, k))
    for N in range(1, 7):
        rep = exact_stationarity_check(fam, mu, 3, N, TASEP)
        assert rep.residual == 0 and rep.passed


def test_stationarity_stick():
    stick = make_builtin("stick")
    assert exact_stationarity_check(stick, ex4_marginal(2), 3, 3, TASEP).residual == F(24, 181)
    assert exact_stationarity_check(stick, geometric(F(1, 2)), 3, 3, TASEP).residual == 0


def test_stationarity_empty_and_guard():
    rep = exact_stationarity_check(make_builtin("stick"), ex4_marginal(2), 3, 0, TASEP)
    assert rep.states == 1 and rep.residual == 0
    with pytest.raises(GuardExceeded):
        exact_stationarity_check(make_builtin("stick"), ex4_marginal(2), 8, 30, TASEP, guard=1000)


def test_symmetric_kernel_stationarity():
    mu = geometric(F(1, 2))
    rep = exact_stationarity_check(make_builtin("qhahn", {"q": "1/3"}), mu, 4, 4, Kernel.nearest_neighbour(1))
    assert rep.residual == 0


def test_null_vector_is_canonical_ensemble():
    mu = ex4_marginal(3)
    fam = build_mmzrp_rates(mu, lambda k: F(1, k))
    law = exact_stationary_law(fam, TASEP, 3, 4)
    ens = build_canonical(mu, 3, 4, mode="exact")
    assert all(law[eta] == ens.probability(eta) for eta in simplex_states(3, 4))


def test_simplex_enumeration_count():
    from math import comb
    for L, N in [(1, 4), (3, 5), (4, 0)]:
        states = list(simplex_states(L, N))
        assert len(states) == comb(N + L - 1, L - 1) == len(set(states))
        assert all(sum(s) == N for s in states)
