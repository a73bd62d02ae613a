"""One-shot entropic quantities.

Operators may be given as single matrices or as lists of blocks of a
block-diagonal operator (block weights folded into the matrices). States
with classical registers are reduced to such block lists, which keeps every
quantity exact while avoiding the full expansion.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy.linalg import block_diag
from scipy.stats import norm

from . import conic, linalg
from .divergences import binary_entropy, relative_entropy, relative_entropy_variance
from .errors import (BadPartition, BracketInverted, DimMismatch, InvalidEpsilon,
                     NumericalDegeneracy, SolverNoConverge, TooLarge)
from .states import CQState, DensityOperator, as_cq

DEFAULT_WIDTH = 1e-5
SDP_TOL = 1e-9
FID_TOL = 1e-9
DEGENERACY_GAP = 1e-8


# ----------------------------------------------------------------- plumbing

def _blocks(x):
    if isinstance(x, (list, tuple)):
        return [linalg.hermitian_part(getattr(b, "matrix", b)) for b in x]
    return [linalg.hermitian_part(getattr(x, "matrix", x))]


def _pair_blocks(rho, sigma):
    if isinstance(rho, CQState) and isinstance(sigma, CQState):
        keys = sorted(set(rho.probs) | set(sigma.probs))
        d = rho.quantum_dim
        z = np.zeros((d, d), dtype=complex)
        rb = [rho.probs[k] * rho.blocks[k].matrix if k in rho.probs else z for k in keys]
        sb = [sigma.probs[k] * sigma.blocks[k].matrix if k in sigma.probs else z for k in keys]
        return rb, sb
    rb, sb = _blocks(rho), _blocks(sigma)
    if len(rb) != len(sb) or any(r.shape != s.shape for r, s in zip(rb, sb)):
        raise DimMismatch("rho and sigma have different block structure")
    return rb, sb


def _check_eps(eps, lo_open=True):
    if not (0 < eps < 1) if lo_open else not (0 <= eps < 1):
        raise InvalidEpsilon(f"epsilon {eps} outside (0, 1)")


def _assemble(blocks):
    return block_diag(*blocks) if len(blocks) > 1 else blocks[0]


# --------------------------------------------------------- hypothesis testing

@dataclass
class HypothesisTest:
    """Optimal test for rho against sigma at type-I error eps."""

    blocks: list
    threshold: float
    boundary_mix: float
    type1: float
    type2: float
    eps: float
    gap: float = 0.0
    degenerate: bool = False

    @property
    def matrix(self):
        return _assemble(self.blocks)

    @property
    def value(self):
        return math.inf if self.type2 <= 0 else -math.log2(self.type2)


def _np_parts(rb, sb, mu):
    """Spectral pieces of mu*rho - sigma: (eigvals, eigvecs) per block."""
    if len({r.shape for r in rb}) == 1:
        w, v = np.linalg.eigh(mu * np.stack(rb) - np.stack(sb))
        return list(zip(w, v))
    return [np.linalg.eigh(mu * r - s) for r, s in zip(rb, sb)]


def _np_masses(rb, parts, scale):
    """Tr P_+ rho and Tr P_0 rho with eigenvalue tolerance relative to ``scale``."""
    tol = 1e-11 * scale
    g = h0 = 0.0
    for r, (w, v) in zip(rb, parts):
        diag = np.einsum("ji,jk,ki->i", v.conj(), r, v).real
        g += float(np.sum(diag[w > tol]))
        h0 += float(np.sum(diag[np.abs(w) <= tol]))
    return g, h0


def _kernel_mass(rb, sb):
    """Tr Pi_ker(sigma) rho and the kernel projectors."""
    m = 0.0
    projs = []
    for r, s in zip(rb, sb):
        w, v = np.linalg.eigh(s)
        smax = max(np.max(np.abs(w)) if w.size else 0.0, 0.0)
        ker = w <= linalg.SUPPORT_TOL * max(smax, 1e-300) if smax > 0 else np.ones_like(w, bool)
        vk = v[:, ker]
        projs.append(vk @ vk.conj().T)
        m += float(np.real(np.trace(projs[-1] @ r)))
    return m, projs


def _np_spectral(rb, sb, eps):
    target = 1.0 - eps
    kmass, kprojs = _kernel_mass(rb, sb)
    if kmass >= target - 1e-13:
        c = min(target / kmass, 1.0) if kmass > 0 else 0.0
        lam = [c * p for p in kprojs]
        t1 = 1 - sum(float(np.real(np.trace(l @ r))) for l, r in zip(lam, rb))
        return HypothesisTest(lam, 0.0, c, t1, 0.0, eps)

    rnorm = max(max(np.max(np.abs(np.linalg.eigvalsh(r))) for r in rb), 1e-300)
    snorm = max(max(np.max(np.abs(np.linalg.eigvalsh(s))) for s in sb), 1e-300)

    def g_at(mu):
        parts = _np_parts(rb, sb, mu)
        return _np_masses(rb, parts, mu * rnorm + snorm)[0]

    lo, hi = 1.0, 1.0
    if g_at(1.0) >= target:
        while g_at(lo) >= target:
            lo /= 2.0
            if lo < 1e-300:
                break
        hi = 2.0 * lo
    else:
        while g_at(hi) < target:
            hi *= 2.0
            if hi > 1e300:
                raise NumericalDegeneracy("multiplier search diverged")
        lo = hi / 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g_at(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4e-16 * hi:
            break

    best = None
    for mu in (hi, lo):
        parts = _np_parts(rb, sb, mu)
        scale = mu * rnorm + snorm
        g, h0 = _np_masses(rb, parts, scale)
        c = 0.0 if h0 <= 0 else min(max((target - g) / h0, 0.0), 1.0)
        tol = 1e-11 * scale
        lam = []
        for (w, v) in parts:
            weights = np.where(w > tol, 1.0, np.where(np.abs(w) <= tol, c, 0.0))
            lam.append((v * weights) @ v.conj().T)
        t1 = 1 - sum(float(np.real(np.trace(l @ r))) for l, r in zip(lam, rb))
        t2 = sum(float(np.real(np.trace(l @ s))) for l, s in zip(lam, sb))
        # Lagrangian lower bound on the optimal type-II error
        pos = sum(float(np.sum(np.clip(w, 0, None))) for w, _ in parts)
        dual = mu * target - pos
        cand = (t1 <= eps + 1e-12, t2, dual, mu, c, lam, t1)
        if cand[0] and (best is None or t2 < best[1]):
            best = cand
    if best is None:
        raise NumericalDegeneracy("no feasible threshold test found")
    _, t2, dual, mu, c, lam, t1 = best
    return HypothesisTest(lam, 1.0 / mu, c, max(t1, 0.0), max(t2, 0.0), eps,
                          gap=max(t2 - dual, 0.0))


def hypothesis_test(rho, sigma, eps, fallback=True):
    """Optimal Neyman-Pearson test (see :func:`d_hypo`)."""
    _check_eps(eps)
    rb, sb = _pair_blocks(rho, sigma)
    try:
        test = _np_spectral(rb, sb, eps)
        ok = test.gap <= DEGENERACY_GAP
    except NumericalDegeneracy:
        if not fallback:
            raise
        ok, test = False, None
    if not ok:
        if not fallback:
            raise NumericalDegeneracy(f"Lagrangian gap {test.gap:.3e} exceeds {DEGENERACY_GAP:g}")
        sol = conic.solve(conic.hypothesis_test_program(rb, sb, eps), tol=1e-10)
        if sol.status != "optimal":
            raise SolverNoConverge("fallback hypothesis-test program did not converge",
                                   {"primal": sol.primal_residual, "gap": sol.gap})
        lam = [sol.blocks[f"L{k}"] for k in range(len(rb))]
        t1 = 1 - sum(float(np.real(np.trace(l @ r))) for l, r in zip(lam, rb))
        t2 = sum(float(np.real(np.trace(l @ s))) for l, s in zip(lam, sb))
        test = HypothesisTest(lam, math.nan, math.nan, t1, t2, eps,
                              gap=sol.gap, degenerate=True)
    return test


def d_hypo(rho, sigma, eps):
    """Hypothesis-testing relative entropy D_H^eps(rho||sigma) in bits.

    Returns ``(value, test)``. The test is Lambda = {mu rho - sigma > 0} +
    c Pi_0 where mu = 1/t is found by bisection on the monotone mass
    Tr{mu rho - sigma > 0} rho and c fills the kernel so that the type-I
    error is exactly eps. ``test.gap`` is the distance to the Lagrangian
    lower bound max_mu [mu (1-eps) - Tr(mu rho - sigma)_+].
    """
    test = hypothesis_test(rho, sigma, eps)
    return test.value, test


# ------------------------------------------------------------- max entropies

def d_max(rho, sigma):
    """D_max(rho||sigma) = log2 lambda_max(sigma^-1/2 rho sigma^-1/2); inf off support."""
    rb, sb = _pair_blocks(rho, sigma)
    best = -math.inf
    for r, s in zip(rb, sb):
        if np.max(np.abs(r)) == 0:
            continue
        w, v = np.linalg.eigh(s)
        keep = linalg.support_mask(w)
        vk = v[:, keep]
        off = r - vk @ (vk.conj().T @ r @ vk) @ vk.conj().T
        if np.max(np.abs(off), initial=0.0) > 1e-9 * max(np.max(np.abs(r)), 1e-300) or not keep.any():
            return math.inf
        isq = vk / np.sqrt(w[keep])
        g = isq.conj().T @ r @ isq
        top = float(np.max(np.linalg.eigvalsh(0.5 * (g + g.conj().T))))
        if top > 0:
            best = max(best, math.log2(top))
    return 0.0 if abs(best) < 1e-12 else best


def _fidelity_blocks(rb, pb):
    from .divergences import fidelity
    return sum(fidelity(r, p) for r, p in zip(rb, pb) if np.max(np.abs(r)) > 0)


def _purified_blocks(rb, pb):
    f = min(_fidelity_blocks(rb, pb), 1.0)
    return math.sqrt(max(1.0 - f * f, 0.0))


@dataclass
class SmoothingCertificate:
    """Witness for a smooth max-entropy value."""

    lam: float
    rho_prime: list
    distance: float
    feasibility_residual: float
    bracket: tuple = (math.nan, math.nan)
    solves: int = 0
    eps: float = math.nan

    @property
    def value(self):
        return self.lam

    @property
    def matrix(self):
        return _assemble(self.rho_prime)


def _smooth_program(rb, sb, mu):
    prog = conic.ConicProgram()
    tr_maps = {}
    obj = {}
    for k, (r, s) in enumerate(zip(rb, sb)):
        d = r.shape[0]
        w_name = f"W{k}"
        if np.max(np.abs(r)) > 0:
            y = f"Y{k}"
            prog.add_block(y, 2 * d, "psd")
            prog.add_block(w_name, d, "psd")
            prog.add_constraint({y: conic._top_left(d)}, r)
            prog.add_constraint({y: conic._bottom_right(d), w_name: lambda x: x}, mu * s)
            tr_maps[y] = (lambda dd: (lambda x: np.real(np.trace(x[dd:, dd:]))))(d)
            obj[y] = conic._offdiag_objective(d)
        else:
            o = f"O{k}"
            prog.add_block(o, d, "psd")
            prog.add_block(w_name, d, "psd")
            prog.add_constraint({o: lambda x: x, w_name: lambda x: x}, mu * s)
            tr_maps[o] = lambda x: np.real(np.trace(x))
    prog.add_constraint(tr_maps, 1.0)
    prog.set_objective(obj, "max")
    return prog


def _extract_prime(sol, rb):
    out = []
    for k, r in enumerate(rb):
        d = r.shape[0]
        if f"Y{k}" in sol.blocks:
            out.append(sol.blocks[f"Y{k}"][d:, d:])
        else:
            out.append(sol.blocks[f"O{k}"])
    tr = sum(np.trace(b).real for b in out)
    return [0.5 * (b + b.conj().T) / tr for b in out]


def _bisect(build, lo, hi, f0, width, known_hi_witness, extract, tol=SDP_TOL, max_iters=20000):
    """Smallest feasible lambda in [lo, hi] to within ``width``.

    ``build(mu)`` returns the max-fidelity program at mu = 2^lambda; a point
    is feasible when the optimal fidelity reaches ``f0``.
    """
    warm = None
    solves = 0
    witness = known_hi_witness
    sol = conic.solve(build(2.0 ** lo), tol=tol, max_iters=max_iters)
    solves += 1
    warm = sol if sol.state else None
    if sol.objective >= f0 - FID_TOL and sol.status == "optimal":
        return lo, (lo, lo), extract(sol), solves
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        sol = conic.solve(build(2.0 ** mid), tol=tol, max_iters=max_iters, warm=warm)
        solves += 1
        if sol.state:
            warm = sol
        if sol.status == "infeasible-certificate":
            lo = mid
            continue
        if sol.objective >= f0 - FID_TOL:
            hi = mid
            witness = extract(sol)
        else:
            lo = mid
    return hi, (lo, hi), witness, solves


def _support_restricted(rb, sb):
    """Project rho blocks onto supp(sigma); returns (blocks, kept mass)."""
    out, mass = [], 0.0
    for r, s in zip(rb, sb):
        p = linalg.support_projector(s) if np.max(np.abs(s)) > 0 else np.zeros_like(s)
        pr = p @ r @ p
        out.append(pr)
        mass += np.trace(pr).real
    return [b / mass for b in out] if mass > 0 else out, mass


def d_max_smooth(rho, sigma, eps, width=DEFAULT_WIDTH):
    """Smooth max-relative entropy over the purified-distance ball of radius eps.

    Bisection on lambda in [0, D_max]; each step maximizes F(rho, rho') over
    normalized rho' with rho' <= 2^lambda sigma using the block-operator
    characterization of the fidelity. Returns a :class:`SmoothingCertificate`
    whose ``lam`` is the feasible end of the final bracket.
    """
    if eps == 0:
        rb, sb = _pair_blocks(rho, sigma)
        lam = d_max(rb, sb)
        return SmoothingCertificate(lam, rb, 0.0, 0.0, (lam, lam), 0, 0.0)
    _check_eps(eps)
    rb, sb = _pair_blocks(rho, sigma)
    f0 = math.sqrt(1.0 - eps * eps)
    hi = d_max(rb, sb)
    start = rb
    if not math.isfinite(hi):
        start, mass = _support_restricted(rb, sb)
        if mass < f0 * f0:
            return SmoothingCertificate(math.inf, rb, 0.0, math.inf, (math.inf, math.inf), 0, eps)
        hi = d_max(start, sb)
    hi = max(hi, 0.0)
    lam, bracket, witness, solves = _bisect(
        lambda mu: _smooth_program(rb, sb, mu), 0.0, hi, f0, width, start,
        lambda sol: _extract_prime(sol, rb))
    dist = _purified_blocks(rb, witness)
    resid = 0.0
    for w, s in zip(witness, sb):
        m = 2.0 ** lam * s - w
        resid = max(resid, -float(np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    return SmoothingCertificate(lam, witness, dist, resid, bracket, solves, eps)


# ------------------------------------------------------ mutual-information forms

@dataclass
class _Family:
    """Blocks of a state on (A;B) conditioned on classical X.

    ``keys`` enumerate (x, a_c, b_c) classical tuples; ``rho`` and ``ref``
    hold the weighted blocks of rho^{XAB} and of sum_x p(x)|x><x| (x)
    rho^A_x (x) rho^B_x on the quantum parts A_q (x) B_q.
    """

    keys: list
    rho: list
    ref: list
    d_aq: int
    d_bq: int
    rho_b: dict  # (x, b_c) -> p(b_c|x) rho^{B_q}_{x b_c}
    a_cards: tuple


def _labels(x):
    if x is None:
        return []
    return [x] if isinstance(x, str) else list(x)


def _family(state, a, b, given=()):
    s = as_cq(state)
    a, b, x = _labels(a), _labels(b), _labels(given)
    allx = a + b + x
    if not a or not b:
        raise BadPartition("A and B must be nonempty")
    if len(set(allx)) != len(allx):
        raise BadPartition(f"partitions overlap: {a}, {b}, {x}")
    for l in allx:
        if l not in s.labels:
            raise BadPartition(f"unknown label {l!r}")
    for l in x:
        if not s.is_classical(l):
            raise BadPartition(f"conditioning register {l!r} must be classical")
    m = s.keep(allx)
    if isinstance(m, DensityOperator):
        m = as_cq(m)
    cl, ql = m.classical_labels, m.quantum_labels
    xi = [cl.index(l) for l in x]
    ai = [cl.index(l) for l in a if l in cl]
    bi = [cl.index(l) for l in b if l in cl]
    aq = [l for l in a if l in ql]
    bq = [l for l in b if l in ql]
    qdims = dict(zip(ql, m.quantum_dims))
    d_aq = int(np.prod([qdims[l] for l in aq])) if aq else 1
    d_bq = int(np.prod([qdims[l] for l in bq])) if bq else 1
    a_cards = tuple(m.cards[i] for i in ai)

    P, R = {}, {}
    for key, p in m.probs.items():
        kx = tuple(key[i] for i in xi)
        ka = tuple(key[i] for i in ai)
        kb = tuple(key[i] for i in bi)
        blk = m.blocks[key]
        if aq or bq:
            blk = blk.reduce(aq + bq).reorder(aq + bq).matrix
        else:
            blk = np.ones((1, 1), dtype=complex)
        k3 = (kx, ka, kb)
        P[k3] = P.get(k3, 0.0) + p
        R[k3] = R.get(k3, 0) + p * blk
    px, pxa, pxb = {}, {}, {}
    ra, rbq = {}, {}
    for (kx, ka, kb), p in P.items():
        px[kx] = px.get(kx, 0.0) + p
        pxa[(kx, ka)] = pxa.get((kx, ka), 0.0) + p
        pxb[(kx, kb)] = pxb.get((kx, kb), 0.0) + p
        w = R[(kx, ka, kb)]
        ra[(kx, ka)] = ra.get((kx, ka), 0) + linalg.partial_trace(w, (d_aq, d_bq), [0])
        rbq[(kx, kb)] = rbq.get((kx, kb), 0) + linalg.partial_trace(w, (d_aq, d_bq), [1])
    keys, rho, ref = [], [], []
    zero = np.zeros((d_aq * d_bq, d_aq * d_bq), dtype=complex)
    for (kx, ka) in sorted(pxa):
        for (kx2, kb) in sorted(pxb):
            if kx2 != kx:
                continue
            k3 = (kx, ka, kb)
            keys.append(k3)
            rho.append(R.get(k3, zero))
            ref.append(np.kron(ra[(kx, ka)], rbq[(kx, kb)]) / px[kx])
    rho_b = {k: v / px[k[0]] for k, v in rbq.items()}
    return _Family(keys, rho, ref, d_aq, d_bq, rho_b, a_cards)


def i_hypo(state, a, b, eps):
    """I_H^eps(A;B) = D_H^eps(rho^{AB} || rho^A (x) rho^B)."""
    fam = _family(state, a, b)
    return d_hypo(fam.rho, fam.ref, eps)[0]


def i_hypo_cond(state, a, b, given, eps):
    """I_H^eps(A;B|X) against rho^{A-X-B} = sum_x p(x)|x><x| (x) rho^A_x (x) rho^B_x."""
    fam = _family(state, a, b, given)
    return d_hypo(fam.rho, fam.ref, eps)[0]


def hypothesis_test_family(state, a, b, given, eps):
    """Optimal test for the (conditional) mutual-information pair, with its block keys."""
    fam = _family(state, a, b, given)
    return fam, hypothesis_test(fam.rho, fam.ref, eps)


def d_max_mi(state, a, b, eps, width=DEFAULT_WIDTH):
    fam = _family(state, a, b)
    return d_max_smooth(fam.rho, fam.ref, eps, width).lam


def d_max_cmi(state, a, b, given, eps, width=DEFAULT_WIDTH):
    fam = _family(state, a, b, given)
    return d_max_smooth(fam.rho, fam.ref, eps, width).lam


def d_max_cmi_certificate(state, a, b, given, eps, width=DEFAULT_WIDTH):
    fam = _family(state, a, b, given)
    return d_max_smooth(fam.rho, fam.ref, eps, width)


# --------------------------------------------------------------- tilde I_max

@dataclass
class BracketEstimate:
    lower: float
    upper: float
    heuristic: float
    methods: dict = field(default_factory=dict)
    witness: SmoothingCertificate = None

    @property
    def certified_upper(self):
        """Smallest value known to be attained or bounded from above."""
        return min(self.upper, self.heuristic)


class _LinkedFamily:
    """Blocks for min D_max(rho' || rho'^{XA} (x) rho^B_x) over classical-on-X rho'.

    Every classical value of A is represented so the smoothed state may move
    weight onto symbols the original state never uses.
    """

    def __init__(self, rho_blocks, groups, ref_b, d_aq, d_bq):
        self.rho = rho_blocks
        self.groups = groups
        self.ref_b = ref_b
        self.d_aq = d_aq
        self.d_bq = d_bq


def _linked_from_family(fam):
    rho, groups, ref_b = [], [], []
    zero = np.zeros((fam.d_aq * fam.d_bq,) * 2, dtype=complex)
    lookup = dict(zip(fam.keys, fam.rho))
    xs = sorted({k[0] for k in fam.keys})
    a_all = list(itertools.product(*[range(c) for c in fam.a_cards]))
    gid = {}
    for kx in xs:
        bs = sorted(kb for (x2, kb) in fam.rho_b if x2 == kx)
        for ka in a_all:
            g = gid.setdefault((kx, ka), len(gid))
            for kb in bs:
                rho.append(lookup.get((kx, ka, kb), zero))
                groups.append(g)
                ref_b.append(fam.rho_b[(kx, kb)])
    return _LinkedFamily(rho, groups, ref_b, fam.d_aq, fam.d_bq)


def _linked_program(lf, mu):
    da, db = lf.d_aq, lf.d_bq
    d = da * db
    prog = conic.ConicProgram()
    names = []
    obj, tr_maps = {}, {}
    for k, r in enumerate(lf.rho):
        if np.max(np.abs(r)) > 0:
            nm = f"Y{k}"
            prog.add_block(nm, 2 * d, "psd")
            prog.add_constraint({nm: conic._top_left(d)}, r)
            obj[nm] = conic._offdiag_objective(d)
            br = conic._bottom_right(d)
        else:
            nm = f"O{k}"
            prog.add_block(nm, d, "psd")
            br = lambda x: x
        names.append((nm, br))
        tr_maps[nm] = (lambda f: (lambda x: np.real(np.trace(f(x)))))(br)
        prog.add_block(f"W{k}", d, "psd")
    for k in range(len(lf.rho)):
        maps = {f"W{k}": lambda x: -x}
        refb = lf.ref_b[k]
        for j, (nm, br) in enumerate(names):
            if lf.groups[j] != lf.groups[k]:
                continue

            def f(x, br=br, same=(j == k), refb=refb):
                om = br(x)
                out = mu * np.kron(linalg.partial_trace(om, (da, db), [0]), refb)
                return out - om if same else out
            maps[nm] = f
        prog.add_constraint(maps, np.zeros((d, d), dtype=complex))
    prog.add_constraint(tr_maps, 1.0)
    prog.set_objective(obj, "max")
    return prog, names


def _linked_extract(sol, names):
    out = []
    for nm, br in names:
        out.append(br(sol.blocks[nm]))
    tr = sum(np.trace(b).real for b in out)
    return [0.5 * (b + b.conj().T) / tr for b in out]


def _linked_dmax(lf, blocks):
    """D_max(rho' || Tr_B(rho'_group) (x) ref) for explicit blocks."""
    refs = []
    marg = {}
    for b, g in zip(blocks, lf.groups):
        marg[g] = marg.get(g, 0) + linalg.partial_trace(b, (lf.d_aq, lf.d_bq), [0])
    for b, g, rb in zip(blocks, lf.groups, lf.ref_b):
        refs.append(np.kron(marg[g], rb))
    return d_max(blocks, refs)


def _tilde_bisect(lf, eps, width):
    f0 = math.sqrt(1.0 - eps * eps)
    hi = _linked_dmax(lf, lf.rho)
    start = lf.rho
    if not math.isfinite(hi):
        raise BadPartition("unsmoothed quantity is infinite; support condition fails")
    hi = max(hi, 0.0)
    state = {}

    def build(mu):
        prog, names = _linked_program(lf, mu)
        state["names"] = names
        return prog

    lam, bracket, witness, solves = _bisect(
        build, 0.0, hi, f0, width, start, lambda sol: _linked_extract(sol, state["names"]))
    dist = _purified_blocks(lf.rho, witness)
    exact = _linked_dmax(lf, witness)
    cert = SmoothingCertificate(lam, witness, dist, max(exact - lam, 0.0), bracket, solves, eps)
    return lam, cert


def _tilde_alternating(fam, lf, eps, width, rounds=50):
    """Fix the A-marginal, smooth against it, update the marginal; keep the best value."""
    marg = {}
    for r, g in zip(lf.rho, lf.groups):
        marg[g] = marg.get(g, 0) + linalg.partial_trace(r, (lf.d_aq, lf.d_bq), [0])
    best, best_cert = math.inf, None
    prev = math.inf
    for _ in range(rounds):
        ref = [np.kron(marg[g], rb) for g, rb in zip(lf.groups, lf.ref_b)]
        cert = d_max_smooth(lf.rho, ref, eps, width)
        if not math.isfinite(cert.lam):
            break
        val = _linked_dmax(lf, cert.rho_prime)
        if val < best:
            best, best_cert = val, cert
        if prev - val < 1e-6:
            break
        prev = val
        marg = {}
        for r, g in zip(cert.rho_prime, lf.groups):
            marg[g] = marg.get(g, 0) + linalg.partial_trace(r, (lf.d_aq, lf.d_bq), [0])
    return best, best_cert


def _additive_unconditional(eps):
    # upper bound evaluated at half the radius
    return math.log2(3.0 / (eps / 2.0) ** 2)


def _additive_conditional(eps):
    e = eps / 2.0
    return math.log2(1.0 / (1.0 - math.sqrt(1.0 - e * e)) + 1.0)


def _tilde(fam, eps, conditional, width, method):
    _check_eps(eps)
    lf = _linked_from_family(fam)
    lower = d_max_smooth(fam.rho, fam.ref, eps, width).lam
    half = d_max_smooth(fam.rho, fam.ref, eps / 2.0, width).lam
    add = _additive_conditional(eps) if conditional else _additive_unconditional(eps)
    upper = half + add
    if method == "alternating":
        heur, cert = _tilde_alternating(fam, lf, eps, width)
    else:
        heur, cert = _tilde_bisect(lf, eps, width)
    methods = {"lower": "smooth D_max against the fixed marginal",
               "upper": f"smooth D_max at eps/2 plus {add:.6f}",
               "heuristic": method}
    est = BracketEstimate(lower, upper, heur, methods, cert)
    slack = width + 1e-7
    if not (lower <= heur + slack and heur <= upper + slack):
        raise BracketInverted(f"bracket order violated: lower={lower:.6f} "
                              f"heuristic={heur:.6f} upper={upper:.6f}")
    return est


def i_max_tilde(state, a, b, eps, width=DEFAULT_WIDTH, method="bisection"):
    """Bracket for the smoothed-marginal max-information of A and B.

    ``heuristic`` minimizes D_max(rho' || rho'^A (x) rho^B) over the ball.
    The objective's sublevel sets are convex (the constraint is linear in
    rho' for fixed lambda), so the default ``bisection`` method returns the
    optimum up to solver tolerance; ``alternating`` fixes the marginal,
    solves the convex subproblem and iterates.
    """
    return _tilde(_family(state, a, b), eps, False, width, method)


def i_max_tilde_cond(state, a, b, given, eps, width=DEFAULT_WIDTH, method="bisection"):
    """Conditional version; smoothing is restricted to states classical on X."""
    return _tilde(_family(state, a, b, given), eps, True, width, method)


def i_max_tilde_reference(rho_blocks, ref_b_blocks, d_a, d_b, eps, width=DEFAULT_WIDTH):
    """min over the ball of D_max(rho'^{XAB} || sum_x rho'^A_x (x) ref_x).

    ``rho_blocks[x]`` are weighted blocks on A (x) B, ``ref_b_blocks[x]`` are
    normalized states on B. Returns the bisection value and its certificate.
    """
    lf = _LinkedFamily([linalg.hermitian_part(r) for r in rho_blocks],
                       list(range(len(rho_blocks))),
                       [linalg.hermitian_part(r) for r in ref_b_blocks], d_a, d_b)
    return _tilde_bisect(lf, eps, width)


# ------------------------------------------------------------ classical paths

def classical_dh(p, q, eps):
    """Neyman-Pearson D_H^eps for pmfs by the ratio-ordered greedy test."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    target = 1.0 - eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, p / np.where(q > 0, q, 1.0), np.where(p > 0, np.inf, 0.0))
    order = np.argsort(-ratio, kind="stable")
    ps, qs = p[order], q[order]
    cum = np.cumsum(ps)
    j = int(np.searchsorted(cum, target - 1e-15))
    j = min(j, len(ps) - 1)
    before = cum[j - 1] if j > 0 else 0.0
    frac = 0.0 if ps[j] == 0 else min(max((target - before) / ps[j], 0.0), 1.0)
    beta = float(np.sum(qs[:j]) + frac * qs[j])
    return math.inf if beta <= 0 else -math.log2(beta)


def _waterfill_fidelity(p, u):
    """max sum sqrt(p q) over 0 <= q <= u, sum q = 1 (requires sum u >= 1)."""
    pos = p > 0
    cap = float(np.sum(u[pos]))
    if cap <= 1.0:
        return float(np.sum(np.sqrt(p[pos] * u[pos])))
    pp, uu = p[pos], u[pos]
    br = uu / pp
    order = np.argsort(br)
    brs, pps, uus = br[order], pp[order], uu[order]
    # sum_i min(u_i, k p_i) is piecewise linear in k
    cu = np.concatenate([[0.0], np.cumsum(uus)])
    tail_p = np.concatenate([np.cumsum(pps[::-1])[::-1], [0.0]])
    for i in range(len(brs)):
        k = (1.0 - cu[i]) / tail_p[i]
        if k <= brs[i]:
            q = np.minimum(uus, k * pps)
            return float(np.sum(np.sqrt(pps * q)))
    return float(np.sum(np.sqrt(pps * uus)))


def classical_dmax_smooth(p, q, eps, tol=1e-13):
    """Smooth D_max for pmfs, optimizing over pmfs only (exact for commuting pairs)."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    f0 = math.sqrt(1.0 - eps * eps)
    if np.any((q <= 0) & (p > 0)):
        keep = q > 0
        if np.sum(p[keep]) < f0 * f0:
            return math.inf
    with np.errstate(divide="ignore"):
        r = p[q > 0] / q[q > 0]
    lo, hi = 0.0, max(math.log2(np.max(r)) if np.max(r) > 0 else 0.0, 0.0)
    if not np.all(q[p > 0] > 0):
        hi = max(hi, 64.0)
    if _waterfill_fidelity(p, q) >= f0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _waterfill_fidelity(p, 2.0 ** mid * q) >= f0:
            hi = mid
        else:
            lo = mid
    return hi


def _product_pmf(p, n, cap):
    size = len(p) ** n
    if size > cap:
        raise TooLarge(size, cap)
    out = np.ones(1)
    for _ in range(n):
        out = np.outer(out, p).ravel()
    return out


def second_order_diag(rho, sigma, eps, n_max, cap=2 ** 14):
    """Per-copy one-shot rates for commuting rho, sigma against second-order predictions.

    Returns a list of dicts with keys n, dh_rate, dmax_rate, D, V,
    dh_gaussian = D + sqrt(V/n) Phi^-1(eps) and
    dmax_gaussian = D - sqrt(V/n) Phi^-1(eps^2).
    """
    r = linalg.hermitian_part(getattr(rho, "matrix", rho))
    s = linalg.hermitian_part(getattr(sigma, "matrix", sigma))
    if np.max(np.abs(r @ s - s @ r)) > 1e-10:
        raise DimMismatch("second_order_diag requires commuting operators")
    w, v = np.linalg.eigh(r + np.pi * s)
    p = np.clip(np.real(np.einsum("ij,jk,ki->i", v.conj().T, r, v)), 0, None)
    q = np.clip(np.real(np.einsum("ij,jk,ki->i", v.conj().T, s, v)), 0, None)
    if len(p) ** n_max > cap:
        raise TooLarge(len(p) ** n_max, cap)
    D = relative_entropy(np.diag(p), np.diag(q))
    V = relative_entropy_variance(np.diag(p), np.diag(q))
    rows = []
    for n in range(1, n_max + 1):
        pn, qn = _product_pmf(p, n, cap), _product_pmf(q, n, cap)
        dh = classical_dh(pn, qn, eps) / n
        dm = classical_dmax_smooth(pn, qn, eps) / n
        rows.append(dict(n=n, dh_rate=dh, dmax_rate=dm, D=D, V=V,
                         dh_gaussian=D + math.sqrt(V / n) * norm.ppf(eps),
                         dmax_gaussian=D - math.sqrt(V / n) * norm.ppf(eps * eps)))
    return rows


# --------------------------------------------------------- diagnostic bounds

def hypo_upper_bound(rho, sigma, eps):
    """(D + h_b(eps)) / (1 - eps)."""
    return (relative_entropy(rho, sigma) + binary_entropy(eps)) / (1.0 - eps)
