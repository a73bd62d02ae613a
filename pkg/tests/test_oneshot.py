import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from qbcast import divergences as dv, linalg, oneshot
from qbcast.errors import InvalidEpsilon, TooLarge
from qbcast.states import CQState

# Pair drawn by linalg.random_density(2, default_rng(2024)), rounded to 12 digits.
RHO = np.array([[0.635884211589, -0.176693802953 - 0.377679062126j],
                [-0.176693802953 + 0.377679062126j, 0.364115788411]])
SIG = np.array([[0.819175796924, 0.198218532724 - 0.280755668329j],
                [0.198218532724 + 0.280755668329j, 0.180824203076]])
# Frozen from the cvxpy oracles (CLARABEL): hypothesis-testing SDP at eps=0.3 and
# bisection over max-fidelity programs at eps=0.2, width 1e-7.
DH_03 = 1.8782029885448128
DMAX_SMOOTH_02 = 2.016210611310205
# Classical Ĩ at eps=0.3 from the convex-level bisection oracle.
ITILDE = {((.4, .1), (.1, .4)): 0.048388540744781494,
          ((.5, .05), (.15, .3)): 0.052426384583971614}
# (1/n) D_H^0.1 of diag(.5,.5)^n vs diag(.9,.1)^n from scipy linprog on the product pmfs.
NP_RATES = {1: 0.2863041851566409, 2: 0.2824524241899513, 5: 0.3830042821579803,
            12: 0.46516467784647436}


def _classical_pair(P):
    P = np.asarray(P, float)
    pa = P.sum(axis=1)
    blocks = {(a,): np.diag(P[a] / pa[a]) for a in range(P.shape[0])}
    return CQState(("A",), (P.shape[0],), {(a,): pa[a] for a in range(P.shape[0])},
                   blocks, (P.shape[1],), ("B",))


def test_dh_frozen_sdp_value():
    assert oneshot.d_hypo(RHO, SIG, 0.3)[0] == pytest.approx(DH_03, abs=1e-6)


def test_dh_diagonal_pair():
    v, test = oneshot.d_hypo(np.diag([.5, .5]), np.diag([.9, .1]), 0.5)
    assert v == pytest.approx(math.log2(10), abs=1e-9)
    assert test.type1 <= 0.5 + 1e-12


def test_dh_edge_cases(rng):
    r = linalg.random_density(3, rng)
    # identical hypotheses force Tr L sigma = 1 - eps
    assert oneshot.d_hypo(r, r, 0.25)[0] == pytest.approx(-math.log2(0.75), abs=1e-9)
    # rho orthogonal to sigma: infinite
    assert oneshot.d_hypo(np.diag([1., 0]), np.diag([0, 1.]), 0.1)[0] == math.inf
    with pytest.raises(InvalidEpsilon):
        oneshot.d_hypo(r, r, 1.0)
    with pytest.raises(InvalidEpsilon):
        oneshot.d_hypo(r, r, 0.0)


def test_dh_test_operator_is_valid(rng):
    r, s = linalg.random_density(4, rng), linalg.random_density(4, rng)
    t = oneshot.hypothesis_test(r, s, 0.2)
    w = np.linalg.eigvalsh(t.matrix)
    assert w[0] > -1e-10 and w[-1] < 1 + 1e-10
    assert np.real(np.trace(t.matrix @ r)) >= 0.8 - 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), d=st.integers(2, 5), eps=st.floats(0.01, 0.9))
def test_dh_classical_matches_lp(seed, d, eps):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
    expect = oracles.np_lp(p, q, eps)
    assert oneshot.d_hypo(np.diag(p), np.diag(q), eps)[0] == pytest.approx(expect, abs=1e-8)
    assert oneshot.classical_dh(p, q, eps) == pytest.approx(expect, abs=1e-8)


def test_dmax_values(rng):
    assert oneshot.d_max(np.diag([.5, .5]), np.diag([.9, .1])) == pytest.approx(math.log2(5))
    r = linalg.random_density(3, rng)
    assert oneshot.d_max(r, r) == 0.0
    assert oneshot.d_max(np.diag([.5, .5]), np.diag([1., 0])) == math.inf


def test_dmax_smooth_frozen_value():
    c = oneshot.d_max_smooth(RHO, SIG, 0.2)
    assert c.value == pytest.approx(DMAX_SMOOTH_02, abs=2e-5)
    assert c.value >= DMAX_SMOOTH_02 - 1e-6
    assert c.distance <= 0.2 + 1e-7


def test_dmax_smooth_certificate_is_feasible():
    c = oneshot.d_max_smooth(RHO, SIG, 0.2)
    rp = c.matrix
    w = np.linalg.eigvalsh(2 ** c.value * SIG - rp)
    assert w[0] > -1e-6
    assert dv.purified_distance(rp, RHO) <= 0.2 + 1e-6


def test_dmax_smooth_zero_eps_is_dmax(rng):
    r, s = linalg.random_density(2, rng), linalg.random_density(2, rng)
    v = oneshot.d_max_smooth(r, s, 0.0)
    assert getattr(v, "value", v) == pytest.approx(oneshot.d_max(r, s))


@pytest.mark.parametrize("seed", range(4))
def test_dmax_smooth_classical_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    expect = oracles.smooth_dmax_diag(p, q, 0.2)
    assert oneshot.classical_dmax_smooth(p, q, 0.2) == pytest.approx(expect, abs=1e-6)
    assert oneshot.d_max_smooth(np.diag(p), np.diag(q), 0.2).value == pytest.approx(expect, abs=3e-5)


def test_i_max_tilde_classical_frozen():
    for P, expect in ITILDE.items():
        b = oneshot.i_max_tilde(_classical_pair(P), "A", "B", 0.3)
        assert b.lower <= b.heuristic + 1e-9 <= b.upper + 1e-9
        assert b.heuristic == pytest.approx(expect, abs=5e-5)
        assert b.certified_upper >= expect - 1e-6


def test_i_max_tilde_within_grid_oracle():
    P = ((.3, .2), (.1, .4))
    grid = oracles.itilde_grid(P, 0.3, steps=120)
    b = oneshot.i_max_tilde(_classical_pair(P), "A", "B", 0.3)
    assert abs(b.heuristic - grid) <= 0.05
    assert b.heuristic <= grid + 1e-6


def test_i_max_tilde_alternating_not_below_bisection():
    st_ = _classical_pair(((.5, .05), (.15, .3)))
    a = oneshot.i_max_tilde(st_, "A", "B", 0.3, method="alternating")
    b = oneshot.i_max_tilde(st_, "A", "B", 0.3)
    assert a.heuristic >= b.heuristic - 1e-4


def test_i_max_tilde_conditional_reduces_to_plain():
    # a trivial conditioning register gives the unconditional value
    P = np.array([[.4, .1], [.1, .4]])
    probs, blocks = {}, {}
    for a in range(2):
        probs[(0, a)] = P[a].sum()
        blocks[(0, a)] = np.diag(P[a] / P[a].sum())
    s = CQState(("U", "A"), (1, 2), probs, blocks, (2,), ("B",))
    b = oneshot.i_max_tilde_cond(s, "A", "B", "U", 0.3)
    assert b.heuristic == pytest.approx(ITILDE[((.4, .1), (.1, .4))], abs=5e-5)


def test_second_order_rows_frozen():
    rows = oneshot.second_order_diag(np.diag([.5, .5]), np.diag([.9, .1]), 0.1, 12)
    got = {r["n"]: r["dh_rate"] for r in rows}
    for n, v in NP_RATES.items():
        assert got[n] == pytest.approx(v, abs=1e-9)
    assert rows[0]["D"] == pytest.approx(0.736966, abs=1e-6)
    with pytest.raises(TooLarge):
        oneshot.second_order_diag(np.diag([.5, .5]), np.diag([.9, .1]), 0.1, 20, cap=2 ** 10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), eps=st.floats(0.01, 0.9))
def test_dh_below_relative_entropy_bound(seed, eps):
    rng = np.random.default_rng(seed)
    r, s = linalg.random_density(3, rng), linalg.random_density(3, rng)
    assert oneshot.d_hypo(r, s, eps)[0] <= oneshot.hypo_upper_bound(r, s, eps) + 1e-6


def test_hypothesis_test_family_blocks(rng):
    P = np.array([[.4, .1], [.1, .4]])
    fam, t = oneshot.hypothesis_test_family(_classical_pair(P), "A", "B", None, 0.2)
    assert len(t.blocks) == len(fam.keys)
    assert oneshot.i_hypo(_classical_pair(P), "A", "B", 0.2) == pytest.approx(t.value)
