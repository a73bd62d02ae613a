import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from qbcast import linalg, splitlemmas as sl
from qbcast.errors import BadOperands, DimensionCapExceeded, DimMismatch, ValidationError


def _full_rank_instance(rng, n):
    # keep blocks full rank so the logm oracle is well conditioned
    p = rng.dirichlet(np.ones(2))
    rho = [0.9 * linalg.random_density(4, rng) + 0.1 * np.eye(4) / 4 for _ in range(2)]
    sig = [0.9 * linalg.random_density(2, rng) + 0.1 * np.eye(2) / 2 for _ in range(2)]
    return sl.ConvexSplitInstance(p, rho, sig, n, 2, 2)


@pytest.mark.parametrize("seed", range(5))
def test_convex_split_divergence_matches_logm_oracle(seed):
    inst = _full_rank_instance(np.random.default_rng(seed), 2)
    expect = oracles.convex_split_two_copies(inst.p_x, inst.rho_xab, inst.sigma_xb, 2, 2)
    assert sl.convex_split_divergence(inst) == pytest.approx(expect, abs=1e-8)


def test_tau_marginals(rng):
    inst = sl.random_convex_split_instance(rng, 3)
    tau = sl.build_tau(inst)
    for x, blk in tau.blocks.items():
        m = blk.matrix
        a = linalg.partial_trace(m, [2, 2, 2, 2], [0])
        assert np.allclose(a, inst.rho_a(x[0]))
        ab1 = linalg.partial_trace(m, [2, 2, 2, 2], [0, 1])
        expect = (inst.rho_xab[x[0]] + 2 * inst.reference_block(x[0])) / 3
        assert np.allclose(ab1, expect)


def test_product_instance_has_zero_divergence(rng):
    a, s = linalg.random_density(2, rng), linalg.random_density(2, rng)
    inst = sl.ConvexSplitInstance(np.array([1.0]), [np.kron(a, s)], [s], 3, 2, 2)
    assert inst.k == pytest.approx(0.0, abs=1e-9)
    assert sl.convex_split_divergence(inst) == pytest.approx(0.0, abs=1e-9)
    assert sl.convex_split_distance(inst) == pytest.approx(0.0, abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n=st.integers(2, 5))
def test_convex_split_bound_holds(seed, n):
    inst = sl.random_convex_split_instance(np.random.default_rng(seed), n)
    rep = sl.verify_convex_split(inst)
    assert rep.passed, rep


def test_engineered_distance_clause(rng):
    inst = sl.engineered_instance(rng, delta=0.5)
    assert inst.k <= 1.3
    rep = sl.verify_convex_split(inst, delta=0.5)
    assert rep.details["distance"].details["applicable"]
    assert rep.passed


def test_instance_validation(rng):
    r = [linalg.random_density(4, rng)]
    with pytest.raises(ValidationError):
        sl.ConvexSplitInstance(np.array([0.5]), r, [np.eye(2) / 2], 2, 2, 2)
    with pytest.raises(DimMismatch):
        sl.ConvexSplitInstance(np.array([1.0]), r, [np.eye(3) / 3], 2, 2, 2)
    with pytest.raises(ValidationError):
        sl.ConvexSplitInstance(np.array([1.0]), r, [np.diag([1.0, 0.0])], 2, 2, 2)
    inst = sl.ConvexSplitInstance(np.array([1.0]), r, [np.eye(2) / 2], 12, 2, 2, cap=2 ** 10)
    with pytest.raises(DimensionCapExceeded):
        sl.convex_split_divergence(inst)


def test_copies_for():
    assert sl.copies_for(1.0, 0.5) == 8
    assert sl.copies_for(0.0, 1.0) == 1


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(2, 4), d=st.integers(2, 3))
def test_decomposition_identity(seed, m, d):
    rng = np.random.default_rng(seed)
    sts = [linalg.random_density(d, rng) for _ in range(m)]
    p = rng.dirichlet(np.ones(m))
    rep = sl.verify_decomposition_identity(sts, p, linalg.random_density(d, rng))
    assert rep.passed and rep.lhs < 1e-8


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), d=st.sampled_from([2, 4, 8]))
def test_hayashi_nagaoka(seed, d):
    S, T, c = sl.random_hn_instance(d, np.random.default_rng(seed))
    assert sl.verify_hayashi_nagaoka(S, T, c).passed


def test_hayashi_nagaoka_rejects_bad_operands():
    with pytest.raises(BadOperands):
        sl.hayashi_nagaoka_gap(np.eye(2), np.eye(2), 0.0)
    with pytest.raises(BadOperands):
        sl.hayashi_nagaoka_gap(2 * np.eye(2), np.eye(2), 1.0)
    with pytest.raises(BadOperands):
        sl.hayashi_nagaoka_gap(np.eye(2), np.eye(3), 1.0)


def test_smoothed_convex_split(rng):
    inst = sl.engineered_instance(rng, delta=0.5)
    rep = sl.verify_convex_split_smooth(inst, 0.1, 0.5)
    assert rep.details["k"] <= rep.details["k_unsmoothed"] + 1e-6
    assert rep.passed
