"""Model builders shared by several test files."""
import numpy as np

from qbcast import linalg
from qbcast.states import (BroadcastChannelModel, KrausChannel, classical_broadcast_channel,
                           depolarizing_channel, broadcast_from_pair)


def basis_states(d):
    out = []
    for i in range(d):
        m = np.zeros((d, d))
        m[i, i] = 1.0
        out.append(m)
    return out


def random_tiny_model(rng):
    """Qubit broadcast model: |U|=|V|=|X|=2, random modulator and channel A -> BC."""
    puv = rng.dirichlet(np.ones(4)).reshape(2, 2)
    pxv = rng.dirichlet(np.ones(2), size=2)
    mods = [linalg.random_density(2, rng) for _ in range(2)]
    ch = KrausChannel(tuple(linalg.random_kraus(2, 4, rng, n_ops=3)), 2, (2, 2))
    return BroadcastChannelModel(puv, pxv, mods, ch)


def shifted_copy(d, slip):
    """Bob sees x, or x+1 with probability ``slip``; Charlie sees x exactly."""
    p = np.zeros((d, d, d))
    for x in range(d):
        p[x, x, x] = 1 - slip
        p[x, (x + 1) % d, x] = slip
    return classical_broadcast_channel(p)


def large_alphabet_common(d=16, slip=0.001):
    """U uniform on d symbols, V = X = U, nearly noiseless outputs."""
    puv = np.eye(d) / d
    return BroadcastChannelModel(puv, np.eye(d), basis_states(d), shifted_copy(d, slip))


def large_alphabet_pair(d=16, slip=0.001):
    """Trivial U, V = X uniform on d symbols."""
    puv = np.full((1, d), 1.0 / d)
    return BroadcastChannelModel(puv, np.eye(d), basis_states(d), shifted_copy(d, slip))


def weak_eavesdropper(p_c=0.95, p_b=0.05):
    """Trivial U, binary V = X; Charlie's branch is heavily depolarized."""
    puv = np.array([[0.5, 0.5]])
    ch = broadcast_from_pair(depolarizing_channel(2, p_b), depolarizing_channel(2, p_c))
    return BroadcastChannelModel(puv, np.eye(2), basis_states(2), ch)


def diagonal_broadcast_model(rng):
    """Classical broadcast model with random pmfs and a random p(y,z|x)."""
    puv = rng.dirichlet(np.ones(4)).reshape(2, 2)
    pxv = rng.dirichlet(np.ones(2), size=2)
    pyz = rng.dirichlet(np.ones(4), size=2).reshape(2, 2, 2)
    return BroadcastChannelModel(puv, pxv, basis_states(2), classical_broadcast_channel(pyz))
