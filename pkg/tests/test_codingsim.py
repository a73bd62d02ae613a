import json
import math

import numpy as np
import pytest

import helpers
import oracles
from qbcast import codingsim as cs, linalg, oneshot
from qbcast.errors import DimensionCapExceeded, InvalidEpsilon, OutOfWindow, ValidationError
from qbcast.states import BroadcastChannelModel, KrausChannel, induced_state


def _cfg(model, **kw):
    base = dict(M0=2, Ms=1, M1=2, Md=2)
    base.update(kw)
    return cs.CodebookConfig(model=model, **base)


def test_c_star_minimizes_bound():
    eps, delta, k = 0.1, 0.04, 0.3
    c0 = cs.c_star(eps, delta)
    f = lambda c: (1 + c) * (eps - delta) + (2 + c + 1 / c) * k
    b, c = cs.hn_bound(eps, delta, math.log2(k), 0.0)
    assert c == c0 and b == pytest.approx(f(c0))


def test_config_validation(rng):
    m = helpers.random_tiny_model(rng)
    with pytest.raises(ValidationError):
        _cfg(m, M0=0)
    with pytest.raises(InvalidEpsilon):
        _cfg(m, delta1=0.06)


def test_config_json_roundtrip(rng):
    cfg = _cfg(helpers.random_tiny_model(rng), seed=3)
    back = cs.CodebookConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back.M1 == 2 and back.seed == 3
    with pytest.raises(ValidationError):
        cs.CodebookConfig.from_json({"M0": 1})


def test_srm_povm_complete(rng):
    fam = cs.build_srm_layer1(_cfg(helpers.random_tiny_model(rng)))
    syms = sorted(fam.tests)
    for tup in [(syms[0], syms[-1]), (syms[0], syms[0])]:
        elems = fam.povm(tup)
        assert np.allclose(sum(elems), np.eye(fam.dim), atol=1e-9)
        for e in elems:
            assert np.linalg.eigvalsh(e)[0] > -1e-9


def test_common_error_matches_enumeration_oracle(rng):
    model = helpers.random_tiny_model(rng)
    cfg = _cfg(model, M0=3)
    rep = cs.simulate_common(cfg, receivers=("B",))
    st = induced_state(model)
    fam, t = oneshot.hypothesis_test_family(st, "U", "B", None, cfg.eps1 - cfg.delta1)
    tests, states, probs = {}, {}, {}
    for key, lam, r in zip(fam.keys, t.blocks, fam.rho):
        p = float(np.real(np.trace(r)))
        u = key[1][0]
        tests[u], states[u], probs[u] = lam, r / p, p
    assert rep.p_error_common_B == pytest.approx(
        oracles.srm_error_enumeration(tests, states, probs, 3), abs=1e-10)


def test_single_message_never_errs(rng):
    rep = cs.simulate_common(_cfg(helpers.random_tiny_model(rng), M0=1))
    assert rep.p_error_common_B == pytest.approx(0.0, abs=1e-9)


def test_relabeling_symbols_leaves_error_unchanged(rng):
    m = helpers.random_tiny_model(rng)
    swapped = BroadcastChannelModel(m.p_uv[::-1], m.p_x_given_v, m.modulator, m.channel)
    a = cs.simulate_common(_cfg(m, M0=3)).p_error_common_B
    b = cs.simulate_common(_cfg(swapped, M0=3)).p_error_common_B
    assert a == pytest.approx(b, abs=1e-10)


def test_common_bound_nonvacuous():
    cfg = cs.CodebookConfig(2, 1, 1, 1, helpers.large_alphabet_common(),
                            eps1=0.1, delta1=0.09, delta2=0.09, delta3=0.09)
    rep = cs.simulate_common(cfg)
    for r in ("B", "C"):
        bound = getattr(rep, f"hn_bound_common_{r}")
        assert bound < 1
        assert getattr(rep, f"p_error_common_{r}") <= bound


def test_pair_bound_nonvacuous():
    cfg = cs.CodebookConfig(1, 1, 2, 1, helpers.large_alphabet_pair(),
                            eps1=0.1, delta1=0.09, delta2=0.09, delta3=0.09)
    rep = cs.simulate_pair(cfg)
    assert rep.hn_bound_pair < 1
    assert rep.p_error_pair <= rep.hn_bound_pair


def test_secrecy_counts_match_bruteforce(rng):
    m = helpers.random_tiny_model(rng)
    fast = cs.secrecy_distance(m, 2, 2)
    total = sum(pu * d for d, _, pu in fast.values())
    assert total == pytest.approx(cs.secrecy_distance_bruteforce(m, 2, 2), abs=1e-12)


def test_secrecy_constant_channel_is_zero(rng):
    # B gets the input, C gets a fixed state regardless of it
    w, v = np.linalg.eigh(linalg.random_density(2, rng))
    ops = [np.kron(np.eye(2), np.sqrt(w[j]) * v[:, [j]]) for j in range(2)]
    ch = KrausChannel(tuple(ops), 2, (2, 2))
    m = helpers.random_tiny_model(rng)
    m = BroadcastChannelModel(m.p_uv, m.p_x_given_v, m.modulator, ch)
    for d, _, _ in cs.secrecy_distance(m, 2, 2).values():
        assert d == pytest.approx(0.0, abs=1e-12)


def test_secrecy_single_codeword_reduction(rng):
    m = helpers.random_tiny_model(rng)
    rho_c = [linalg.partial_trace(o, [2, 2], [1]) for o in m.outputs()]
    expect = 0.0
    for u in range(2):
        pu = m.p_uv[u].sum()
        px = (m.p_uv[u] / pu) @ m.p_x_given_v
        bar = sum(px[x] * rho_c[x] for x in range(2))
        expect += pu * sum(px[x] * 0.5 * np.abs(np.linalg.eigvalsh(rho_c[x] - bar)).sum()
                           for x in range(2))
    got = sum(pu * d for d, _, pu in cs.secrecy_distance(m, 1, 1).values())
    assert got == pytest.approx(expect, abs=1e-12)


def test_secrecy_nonvacuous():
    cfg = cs.CodebookConfig(1, 1, 1024, 658, helpers.weak_eavesdropper(), eps2=0.2, eta=0.039)
    rep = cs.simulate_secrecy(cfg)
    assert rep.secrecy_conditions["applicable"]
    assert max(rep.secrecy_tv) <= rep.secrecy_bound
    assert rep.secrecy_bound == pytest.approx(2 * (2 * 0.2 + 0.039))


def test_secrecy_conditions_fail_at_low_rate(rng):
    cfg = _cfg(helpers.weak_eavesdropper(), eps2=0.2, eta=0.039)
    cond = cs.secrecy_conditions(cfg)
    assert not cond["applicable"]


def test_count_cap():
    m = helpers.weak_eavesdropper()
    with pytest.raises(DimensionCapExceeded):
        cs.secrecy_distance(m, 2 ** 12, 2 ** 12)


def test_expurgation_examples():
    assert cs.expurgation_budget(0.01, 0.01, 0.00005)["epsilon"] == pytest.approx(10 ** -0.5)
    assert cs.expurgation_budget(1e-4, 0.01, 5e-5)["error_average"] == pytest.approx(0.0203)
    with pytest.raises(OutOfWindow):
        cs.expurgation_budget(0.2, 0.1, 0.001)


def test_violations_report_respects_applicability():
    rep = cs.SimReport(p_error_common_B=0.5, hn_bound_common_B=0.4, p_error_common_C=0.5,
                       hn_bound_common_C=1.7, p_error_pair=0.1, hn_bound_pair=0.2,
                       secrecy_tv=[0.9], secrecy_bound=0.5,
                       secrecy_conditions={"applicable": False})
    assert rep.violations() == ["common_B"]
