"""Numerical verifiers for the convex-split, decomposition and Hayashi-Nagaoka inequalities."""
from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from . import linalg
from .divergences import relative_entropy
from .errors import BadOperands, DimensionCapExceeded, DimMismatch, ValidationError
from .oneshot import d_max, i_max_tilde_reference
from .states import CQState, DensityOperator

DEFAULT_CAP = 2 ** 14


@dataclass
class VerdictReport:
    lhs: float
    bound: float
    slack: float
    passed: bool
    digest: str = ""
    details: dict = field(default_factory=dict)

    @classmethod
    def make(cls, lhs, bound, tol, digest="", **details):
        slack = bound - lhs
        return cls(float(lhs), float(bound), float(slack), bool(slack >= -tol), digest, details)


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=complex)).tobytes())
    return h.hexdigest()[:16]


def _mat(x):
    if isinstance(x, CQState):
        return x.expand()
    return linalg.hermitian_part(getattr(x, "matrix", x))


# ------------------------------------------------------------ convex split

@dataclass
class ConvexSplitInstance:
    """Classical X, joint states rho_x on A (x) B and reference states sigma_x on B."""

    p_x: np.ndarray
    rho_xab: list
    sigma_xb: list
    n: int
    d_a: int
    d_b: int
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        p = np.asarray(self.p_x, dtype=float)
        if p.ndim != 1 or abs(p.sum() - 1) > 1e-9 or np.any(p < 0):
            raise ValidationError("p_x must be a pmf")
        if len(self.rho_xab) != len(p) or len(self.sigma_xb) != len(p):
            raise DimMismatch("one joint state and one reference per symbol")
        if self.n < 1:
            raise ValidationError("copy count n must be positive")
        rho = [linalg.hermitian_part(r) for r in self.rho_xab]
        sig = [linalg.hermitian_part(s) for s in self.sigma_xb]
        for r, s in zip(rho, sig):
            if r.shape != (self.d_a * self.d_b,) * 2 or s.shape != (self.d_b,) * 2:
                raise DimMismatch("block shapes do not match d_a, d_b")
            linalg.check_psd(r)
            linalg.check_psd(s)
        object.__setattr__(self, "p_x", p)
        object.__setattr__(self, "rho_xab", rho)
        object.__setattr__(self, "sigma_xb", sig)
        for x in self.support:
            rb = linalg.partial_trace(rho[x], (self.d_a, self.d_b), [1])
            if math.isinf(d_max(rb, sig[x])):
                raise ValidationError(f"supp(rho_B) not inside supp(sigma_B) for x={x}")

    @property
    def support(self):
        return [x for x in range(len(self.p_x)) if self.p_x[x] > 0]

    @property
    def dim(self):
        return len(self.p_x) * self.d_a * self.d_b ** self.n

    def rho_a(self, x):
        return linalg.partial_trace(self.rho_xab[x], (self.d_a, self.d_b), [0])

    def reference_block(self, x):
        """rho^A_x (x) sigma^B_x on a single B copy."""
        return np.kron(self.rho_a(x), self.sigma_xb[x])

    @property
    def k(self):
        xs = self.support
        return d_max([self.p_x[x] * self.rho_xab[x] for x in xs],
                     [self.p_x[x] * self.reference_block(x) for x in xs])

    def with_n(self, n):
        return ConvexSplitInstance(self.p_x, self.rho_xab, self.sigma_xb, n,
                                   self.d_a, self.d_b, self.cap)

    def digest(self):
        return _digest(self.p_x, *self.rho_xab, *self.sigma_xb, [self.n])


def _tau_block(inst, x):
    n, da, db = inst.n, inst.d_a, inst.d_b
    base = np.kron(inst.rho_xab[x], linalg.kron(*([inst.sigma_xb[x]] * (n - 1)))) if n > 1 \
        else inst.rho_xab[x].copy()
    dims = [da] + [db] * n
    out = np.zeros_like(base)
    for j in range(n):
        # slot 1 of base holds the correlated copy; move it to slot j+1
        order = [0] + list(range(2, j + 2)) + [1] + list(range(j + 2, n + 1))
        out += linalg.permute_systems(base, dims, order)
    return out / n


def _product_block(inst, x):
    return np.kron(inst.rho_a(x), linalg.kron(*([inst.sigma_xb[x]] * inst.n)))


def _check_cap(inst):
    if inst.dim > inst.cap:
        raise DimensionCapExceeded(inst.dim, inst.cap)


def build_tau(inst):
    """The mixture over the position of the correlated copy, as a cq state on X, A, B1..Bn."""
    _check_cap(inst)
    labels = ("A",) + tuple(f"B{j + 1}" for j in range(inst.n))
    dims = (inst.d_a,) + (inst.d_b,) * inst.n
    probs, blocks = {}, {}
    for x in inst.support:
        probs[(x,)] = float(inst.p_x[x])
        blocks[(x,)] = DensityOperator(_tau_block(inst, x), dims, labels)
    return CQState(("X",), (len(inst.p_x),), probs, blocks, dims, labels)


def _entropy_from(w):
    w = w[w > linalg.SUPPORT_TOL * max(w.max(), 1e-300)]
    return float(-np.sum(w * np.log2(w)))


def _cross_term(inst, x, tau):
    """Tr tau log2(rho^A_x (x) sigma^(x)n), using only the one-copy marginals."""
    da, db, n = inst.d_a, inst.d_b, inst.n
    dims = [da] + [db] * n
    total = 0.0
    la = linalg.log2_on_support(inst.rho_a(x))
    total += float(np.real(np.trace(linalg.partial_trace(tau, dims, [0]) @ la)))
    ls = linalg.log2_on_support(inst.sigma_xb[x])
    for j in range(n):
        total += float(np.real(np.trace(linalg.partial_trace(tau, dims, [j + 1]) @ ls)))
    return total


def convex_split_divergence(inst):
    """D(tau || sum_x p(x)|x><x| (x) rho^A_x (x) sigma_x^(x)n)."""
    _check_cap(inst)
    total = 0.0
    for x in inst.support:
        tau = _tau_block(inst, x)
        s = _entropy_from(np.linalg.eigvalsh(tau))
        total += inst.p_x[x] * (-s - _cross_term(inst, x, tau))
    return max(total, 0.0)


def convex_split_distance(inst):
    """Purified distance between tau and the product reference."""
    _check_cap(inst)
    f = 0.0
    n = inst.n
    for x in inst.support:
        tau = _tau_block(inst, x)
        # sqrt of the product reference factorizes
        sq = np.kron(linalg.sqrtm_psd(inst.rho_a(x)),
                     linalg.kron(*([linalg.sqrtm_psd(inst.sigma_xb[x])] * n)))
        m = sq @ tau @ sq
        w = np.clip(np.linalg.eigvalsh(0.5 * (m + m.conj().T)), 0, None)
        f += inst.p_x[x] * float(np.sum(np.sqrt(w)))
    f = min(f, 1.0)
    return math.sqrt(max(1.0 - f * f, 0.0))


def copies_for(k, delta):
    return max(1, math.ceil(2.0 ** k / delta ** 2 - 1e-12))


def verify_convex_split(inst, delta=None, tol=1e-7):
    """Check D(tau || product) <= log2(1 + 2^k / n); with ``delta``, also P(tau, product) <= delta.

    The distance clause is only claimed for n >= ceil(2^k / delta^2); the
    report records whether the instance meets that copy count.
    """
    k = inst.k
    lhs = convex_split_divergence(inst)
    bound = math.log2(1.0 + 2.0 ** k / inst.n)
    rep = VerdictReport.make(lhs, bound, tol, inst.digest(), k=k, n=inst.n)
    if delta is not None:
        dist = convex_split_distance(inst)
        needed = copies_for(k, delta)
        sub = VerdictReport.make(dist, delta, tol, inst.digest(), k=k, n=inst.n,
                                 copies_required=needed, applicable=inst.n >= needed)
        rep.details["distance"] = sub
        rep.passed = rep.passed and (sub.passed or not sub.details["applicable"])
    return rep


def smoothed_k(inst, eps, width=1e-5):
    """Smoothed k with the sigma references, plus its certificate (None when eps == 0)."""
    if eps == 0:
        return inst.k, None
    xs = inst.support
    lam, cert = i_max_tilde_reference([inst.p_x[x] * inst.rho_xab[x] for x in xs],
                                      [inst.sigma_xb[x] for x in xs],
                                      inst.d_a, inst.d_b, eps, width)
    return lam, cert


def verify_convex_split_smooth(inst, eps, delta, tol=1e-7, width=1e-5):
    """P(tau, product) <= 2 eps + delta at n = ceil(2^k / delta^2) with the smoothed k.

    The smoothed k is the feasible end of a bisection, so it can only
    overestimate the minimum; more copies make the claim easier to meet.
    """
    k, cert = smoothed_k(inst, eps, width)
    n = copies_for(k, delta)
    sized = inst.with_n(n)
    dist = convex_split_distance(sized)
    return VerdictReport.make(dist, 2 * eps + delta, tol, sized.digest(), k=k, n=n,
                              k_unsmoothed=inst.k,
                              witness_distance=None if cert is None else cert.distance)


# ------------------------------------------------------------ generators

def random_convex_split_instance(rng, n, d_x=2, d_a=2, d_b=2, cap=DEFAULT_CAP):
    p = rng.dirichlet(np.ones(d_x))
    rho = [linalg.random_density(d_a * d_b, rng) for _ in range(d_x)]
    sig = [linalg.random_density(d_b, rng) for _ in range(d_x)]
    return ConvexSplitInstance(p, rho, sig, n, d_a, d_b, cap)


def engineered_instance(rng, delta=0.5, p_max=0.3, k_max=1.3, d_x=2, d_a=2, d_b=2,
                        cap=DEFAULT_CAP, tries=1000):
    """Nearly product instance with k <= k_max, sized to n = ceil(2^k / delta^2).

    Each joint block is (1-p) alpha_x (x) sigma_x + p omega_x with p <= p_max.
    """
    for _ in range(tries):
        px = rng.dirichlet(np.ones(d_x))
        rho, sig = [], []
        for _x in range(d_x):
            s = linalg.random_density(d_b, rng)
            a = linalg.random_density(d_a, rng)
            w = linalg.random_density(d_a * d_b, rng)
            p = rng.uniform(0, p_max)
            rho.append((1 - p) * np.kron(a, s) + p * w)
            sig.append(s)
        inst = ConvexSplitInstance(px, rho, sig, 1, d_a, d_b, cap)
        k = inst.k
        if k <= k_max:
            n = copies_for(k, delta)
            if inst.with_n(n).dim <= cap:
                return inst.with_n(n)
    raise ValidationError("could not draw an instance under the k limit")


# ------------------------------------------------------- decomposition identity

def verify_decomposition_identity(states, p, theta, tol=1e-8):
    """D(rho || theta) = sum_i p_i [D(rho_i || theta) - D(rho_i || rho)] for rho = sum_i p_i rho_i."""
    ms = [_mat(s) for s in states]
    p = np.asarray(p, dtype=float)
    if len(ms) != len(p):
        raise DimMismatch("one weight per state")
    th = _mat(theta)
    rho = sum(pi * m for pi, m in zip(p, ms))
    lhs = relative_entropy(rho, th)
    rhs = 0.0
    for pi, m in zip(p, ms):
        if pi > 0:
            rhs += pi * (relative_entropy(m, th) - relative_entropy(m, rho))
    if math.isinf(lhs) or math.isinf(rhs):
        raise ValidationError("support condition fails for the decomposition identity")
    rep = VerdictReport.make(abs(lhs - rhs), 0.0, tol, _digest(th, *ms), lhs_value=lhs,
                             rhs_value=rhs)
    return rep


# ------------------------------------------------------------ Hayashi-Nagaoka

def hayashi_nagaoka_gap(S, T, c):
    """(1+c)(1-S) + (2+c+1/c)T - [1 - (S+T)^-1/2 S (S+T)^-1/2]."""
    S = linalg.hermitian_part(S)
    T = linalg.hermitian_part(T)
    if S.shape != T.shape:
        raise BadOperands("S and T differ in shape")
    if not c > 0:
        raise BadOperands("c must be positive")
    for name, m in (("S", S), ("T", T), ("1-S", np.eye(len(S)) - S)):
        if np.min(np.linalg.eigvalsh(m)) < -linalg.PSD_TOL:
            raise BadOperands(f"{name} is not positive semidefinite")
    g = linalg.inv_sqrt_on_support(S + T)
    eye = np.eye(len(S))
    return (1 + c) * (eye - S) + (2 + c + 1 / c) * T - (eye - g @ S @ g)


def verify_hayashi_nagaoka(S, T, c, tol=1e-8):
    gap = hayashi_nagaoka_gap(S, T, c)
    mn = float(np.min(np.linalg.eigvalsh(0.5 * (gap + gap.conj().T))))
    return VerdictReport.make(-mn, 0.0, tol, _digest(S, T, [c]), min_eigenvalue=mn, c=c)


def random_hn_instance(d, rng):
    u = linalg.random_unitary(d, rng)
    s_eig = rng.uniform(0, 1, d)
    s_eig[rng.random(d) < 0.2] = 0.0
    S = (u * s_eig) @ u.conj().T
    rank = int(rng.integers(1, d + 1))
    T = linalg.random_density(d, rng, rank=rank) * rng.exponential(1.0)
    c = float(np.exp(rng.uniform(-3, 3)))
    return S, T, c
