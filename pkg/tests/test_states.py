import json

import numpy as np
import pytest

from qbcast import linalg, states
from qbcast.errors import (BadPartition, DimMismatch, NegativeEigenvalue, NotTracePreserving,
                           ValidationError)
from qbcast.states import CQState, density


def _cq(rng):
    blocks = {(x,): linalg.random_density(2, rng) for x in range(3)}
    return CQState(("X",), (3,), {(0,): .2, (1,): .3, (2,): .5}, blocks, (2,), ("B",))


def test_density_validation():
    with pytest.raises(ValidationError):
        density(np.diag([0.5, 0.4]))
    with pytest.raises(NegativeEigenvalue):
        density(np.diag([1.2, -0.2]))
    with pytest.raises(DimMismatch):
        density(np.eye(4) / 4, dims=(2, 3))
    with pytest.raises(DimMismatch):
        density(np.eye(4) / 4, dims=(2, 2), labels=("A", "A"))


def test_reduce_and_reorder(rng):
    a = linalg.random_density(2, rng)
    b = linalg.random_density(3, rng)
    s = density(np.kron(a, b), (2, 3), ("A", "B"))
    assert np.allclose(s.reduce(["B"]).matrix, b)
    assert np.allclose(s.reorder(["B", "A"]).matrix, np.kron(b, a))
    with pytest.raises(BadPartition):
        s.reduce(["Z"])


def test_cq_expand_and_marginals(rng):
    s = _cq(rng)
    full = s.expand()
    assert full.dim == 6
    assert np.isclose(np.trace(full.matrix).real, 1)
    assert s.marginal_probs(["X"]) == pytest.approx({(0,): .2, (1,): .3, (2,): .5})
    rb = s.keep(["B"])
    rb = getattr(rb, "matrix", rb)
    expected = sum(p * s.blocks[k].matrix for k, p in s.probs.items())
    assert np.allclose(getattr(rb, "matrix", rb), expected)


def test_cq_rejects_bad_probabilities(rng):
    b = {(0,): np.eye(2) / 2, (1,): np.eye(2) / 2}
    with pytest.raises(ValidationError):
        CQState(("X",), (2,), {(0,): .5, (1,): .6}, b, (2,), ("B",))
    with pytest.raises(DimMismatch):
        CQState(("X",), (2,), {(0,): .5, (2,): .5}, b, (2,), ("B",))


def test_from_density_roundtrip(rng):
    s = _cq(rng)
    back = states.from_density(s.expand(), ["X"])
    for k in s.probs:
        assert back.probs[k] == pytest.approx(s.probs[k])
        assert np.allclose(back.blocks[k].matrix, s.blocks[k].matrix)


def test_channels_are_trace_preserving():
    for ch in (states.depolarizing_channel(3, 0.3), states.amplitude_damping_channel(0.4),
               states.identity_channel(2)):
        s = sum(k.conj().T @ k for k in ch.kraus_ops)
        assert np.allclose(s, np.eye(ch.in_dim))
    with pytest.raises(NotTracePreserving):
        states.KrausChannel((np.eye(2) * 0.5,), 2, (2,))


def test_depolarizing_action(rng):
    rho = linalg.random_density(2, rng)
    out = states.depolarizing_channel(2, 0.4).apply(rho)
    assert np.allclose(out, 0.6 * rho + 0.4 * np.eye(2) / 2)


def test_complementary_channel_marginal(rng):
    ch = states.amplitude_damping_channel(0.3)
    rho = linalg.random_density(2, rng)
    full = states.KrausChannel((ch.isometry(),), 2, (2, 2)).apply(rho)
    assert np.allclose(linalg.partial_trace(full, [2, 2], [0]), ch.apply(rho))


def test_model_json_roundtrip():
    model = states.BroadcastChannelModel(
        np.full((2, 2), .25), np.array([[.9, .1], [.2, .8]]),
        [np.diag([1., 0]), np.diag([0, 1.])],
        states.broadcast_from_pair(states.depolarizing_channel(2, .1),
                                   states.depolarizing_channel(2, .5)))
    obj = json.loads(json.dumps(states.model_to_json(model)))
    back = states.model_from_json(obj)
    s1, s2 = states.induced_state(model), states.induced_state(back)
    for k in s1.probs:
        assert s1.probs[k] == pytest.approx(s2.probs[k])
        assert np.allclose(s1.blocks[k].matrix, s2.blocks[k].matrix)


def test_model_validation():
    ch = states.broadcast_from_pair(states.identity_channel(2), states.identity_channel(2))
    with pytest.raises(ValidationError):
        states.BroadcastChannelModel(np.full((2, 2), .3), np.eye(2), [np.diag([1., 0]), np.diag([0, 1.])], ch)
    with pytest.raises(DimMismatch):
        states.BroadcastChannelModel(np.full((2, 2), .25), np.eye(2), [np.diag([1., 0])], ch)


def test_state_json_rejects_garbage():
    with pytest.raises(ValidationError):
        states.state_from_json({"matrix": "nope"})
