"""Von Neumann quantities and distance measures (all logs base 2)."""
import math

import numpy as np

from . import linalg
from .errors import BadPartition, DimMismatch
from .states import DensityOperator, as_cq


def _mat(x):
    return linalg.hermitian_part(getattr(x, "matrix", x))


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimMismatch(f"operands have shapes {a.shape} and {b.shape}")


def entropy(rho):
    """S(rho) = -Tr rho log rho in bits."""
    w = linalg.eigvalsh(_mat(rho))
    w = w[w > linalg.SUPPORT_TOL * max(w[-1], 0.0)] if w.size else w
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w)))


def shannon_entropy(p):
    p = np.asarray(list(p.values()) if isinstance(p, dict) else p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def binary_entropy(eps):
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    return shannon_entropy([eps, 1 - eps])


def _log_pair(rho, sigma):
    """Spectral data for D and V; flags support violation."""
    r, s = _mat(rho), _mat(sigma)
    _same_shape(r, s)
    ws, vs = np.linalg.eigh(s)
    keep = linalg.support_mask(ws)
    # weight of rho on the kernel of sigma
    diag = np.einsum("ij,jk,ki->i", vs.conj().T, r, vs).real
    off = float(np.sum(diag[~keep]))
    rmax = max(np.max(np.abs(linalg.eigvalsh(r))), 1e-300)
    violated = off > linalg.SUPPORT_TOL * rmax * r.shape[0] * 10
    logs = np.zeros_like(ws)
    logs[keep] = np.log2(ws[keep])
    log_sigma = (vs * logs) @ vs.conj().T
    log_rho = linalg.log2_on_support(r)
    return r, log_rho, log_sigma, violated


def support_violation(rho, sigma):
    """True when supp(rho) is not contained in supp(sigma)."""
    return _log_pair(rho, sigma)[3]


def relative_entropy(rho, sigma):
    """D(rho||sigma) in bits; ``math.inf`` when the support condition fails."""
    r, lr, ls, violated = _log_pair(rho, sigma)
    if violated:
        return math.inf
    return float(np.real(np.trace(r @ (lr - ls))))


def relative_entropy_variance(rho, sigma):
    r, lr, ls, violated = _log_pair(rho, sigma)
    if violated:
        return math.inf
    g = lr - ls
    d = np.real(np.trace(r @ g))
    return float(max(np.real(np.trace(r @ g @ g)) - d * d, 0.0))


def trace_distance(rho, sigma):
    r, s = _mat(rho), _mat(sigma)
    _same_shape(r, s)
    return 0.5 * linalg.trace_norm_hermitian(r - s)


def fidelity(rho, sigma):
    """Root fidelity ||sqrt(rho) sqrt(sigma)||_1, valid for subnormalized operators."""
    r, s = _mat(rho), _mat(sigma)
    _same_shape(r, s)
    sr = linalg.sqrtm_psd(r)
    w = linalg.eigvalsh(sr @ s @ sr)
    return float(np.sum(np.sqrt(np.clip(w, 0, None))))


def generalized_fidelity(rho, sigma):
    """Fidelity extended to subnormalized operators.

    F + sqrt((1 - Tr rho)(1 - Tr sigma)), which reduces to ``fidelity`` when
    either argument has unit trace.
    """
    r, s = _mat(rho), _mat(sigma)
    tr, ts = np.trace(r).real, np.trace(s).real
    return fidelity(r, s) + math.sqrt(max(1 - tr, 0.0) * max(1 - ts, 0.0))


def purified_distance(rho, sigma):
    f = min(generalized_fidelity(rho, sigma), 1.0)
    return math.sqrt(max(1 - f * f, 0.0))


# ------------------------------------------------------- information measures

def _labels(x):
    if isinstance(x, str):
        return [x]
    return list(x)


def marginal_entropy(state, labels):
    """S of the marginal on ``labels`` (classical labels contribute Shannon terms)."""
    s = as_cq(state)
    labels = _labels(labels)
    for l in labels:
        if l not in s.labels:
            raise BadPartition(f"unknown label {l!r}")
    if not labels:
        return 0.0
    m = s.keep(labels)
    if isinstance(m, DensityOperator):
        return entropy(m)
    qpart = 0.0
    if any(l in labels for l in s.quantum_labels):
        qpart = sum(p * entropy(m.blocks[k]) for k, p in m.probs.items())
    return shannon_entropy(m.probs) + qpart


def _check_disjoint(*parts):
    flat = [l for p in parts for l in p]
    if len(set(flat)) != len(flat):
        raise BadPartition(f"partitions overlap: {parts}")
    if any(len(p) == 0 for p in parts[:2]):
        raise BadPartition("A and B must be nonempty")


def mutual_information(state, a, b):
    a, b = _labels(a), _labels(b)
    _check_disjoint(a, b)
    return (marginal_entropy(state, a) + marginal_entropy(state, b)
            - marginal_entropy(state, a + b))


def conditional_mutual_information(state, a, b, given):
    a, b, x = _labels(a), _labels(b), _labels(given)
    _check_disjoint(a, b, x)
    return (marginal_entropy(state, a + x) + marginal_entropy(state, b + x)
            - marginal_entropy(state, a + b + x) - marginal_entropy(state, x))


def coherent_information(state, r, b):
    """I(R>B) = S(B) - S(RB)."""
    r, b = _labels(r), _labels(b)
    return marginal_entropy(state, b) - marginal_entropy(state, r + b)
