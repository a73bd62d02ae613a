"""Randomized trials for divergence inequalities (used by the CLI verifier)."""

import numpy as np

from . import linalg
from .divergences import fidelity, generalized_fidelity, purified_distance, relative_entropy
from .splitlemmas import VerdictReport, _digest


def _channel_apply(ops, rho):
    return sum(k @ rho @ k.conj().T for k in ops)


def pinsker_trial(rng, d):
    """F^2(rho, sigma) >= 2^-D(rho||sigma) with sigma full rank."""
    rho = linalg.random_density(d, rng, rank=int(rng.integers(1, d + 1)))
    sigma = linalg.random_density(d, rng)
    lhs = 2.0 ** (-relative_entropy(rho, sigma))
    return VerdictReport.make(lhs, fidelity(rho, sigma) ** 2, 1e-9, _digest(rho, sigma))


def _root_fid(a, b):
    return float(np.sum(np.linalg.svd(linalg.sqrtm_psd(a) @ linalg.sqrtm_psd(b),
                                      compute_uv=False)))


def purified_props_trial(rng, d):
    """Triangle inequality, monotonicity, the projector bound and the projector fidelity identity.

    Returns the worst of the four reports (smallest slack).
    """
    r, s, t = (linalg.random_density(d, rng) for _ in range(3))
    reps = []
    prs, pst, prt = purified_distance(r, s), purified_distance(s, t), purified_distance(r, t)
    reps.append(VerdictReport.make(prt, prs + pst, 1e-9, _digest(r, s, t), check="triangle"))
    ops = linalg.random_kraus(d, d, rng, int(rng.integers(1, 4)))
    after = purified_distance(_channel_apply(ops, r), _channel_apply(ops, s))
    reps.append(VerdictReport.make(after, prs, 1e-9, _digest(r, s), check="monotonicity"))
    k = int(rng.integers(1, d + 1))
    v = linalg.random_unitary(d, rng)[:, :k]
    proj = v @ v.conj().T
    perp = float(np.real(np.trace(r @ (np.eye(d) - proj))))
    # squared form: sqrt(1 - F^2) loses half the digits near zero
    f = min(generalized_fidelity(r, proj @ r @ proj), 1.0)
    reps.append(VerdictReport.make(1 - f * f, 2 * perp - perp ** 2, 1e-9,
                                   _digest(r, proj), check="projector-bound"))
    a = _root_fid(proj @ r @ proj, s)
    b = _root_fid(r, proj @ s @ proj)
    c = _root_fid(proj @ r @ proj, proj @ s @ proj)
    spread = max(a, b, c) - min(a, b, c)
    reps.append(VerdictReport.make(spread, 0.0, 1e-9, _digest(r, s, proj), check="projector-identity"))
    return min(reps, key=lambda x: x.slack)
