"""Small dense conic solver over Hermitian PSD blocks.

The problem is ``minimize <c, x>`` subject to affine equalities ``A x = b``
and block memberships ``x_k in K_k``, where each K_k is one of

* ``psd``    Hermitian n x n with X >= 0
* ``box``    Hermitian n x n with 0 <= X <= I
* ``nonneg`` real vector with entries >= 0
* ``free``   real vector

The iteration is ADMM on the split ``x in {Ax=b}``, ``z in K``, ``x = z``.
The affine projection uses a prefactored pseudo-inverse, the cone projection
is eigenvalue clipping. Hermitian blocks are vectorized with an orthonormal
real basis so the Frobenius inner product is the Euclidean one.
"""
from dataclasses import dataclass, field

import functools

import numpy as np

from .errors import DimMismatch, ValidationError

_SQ2 = np.sqrt(2.0)
HERMITIAN_KINDS = ("psd", "box")
VECTOR_KINDS = ("nonneg", "free")


@functools.lru_cache(maxsize=None)
def _herm_indices(n):
    iu = np.triu_indices(n, 1)
    return np.arange(n), iu


def hvec(h):
    """Orthonormal real vectorization of a Hermitian matrix (or a stack of them)."""
    h = np.asarray(h)
    n = h.shape[-1]
    di, iu = _herm_indices(n)
    off = h[..., iu[0], iu[1]]
    return np.concatenate([h[..., di, di].real, _SQ2 * off.real, _SQ2 * off.imag], axis=-1)


def hmat(v, n):
    """Inverse of :func:`hvec`."""
    v = np.asarray(v, dtype=float)
    di, iu = _herm_indices(n)
    t = len(iu[0])
    shape = v.shape[:-1] + (n, n)
    h = np.zeros(shape, dtype=complex)
    h[..., di, di] = v[..., :n]
    z = (v[..., n:n + t] + 1j * v[..., n + t:]) / _SQ2
    h[..., iu[0], iu[1]] = z
    h[..., iu[1], iu[0]] = z.conj()
    return h


@dataclass
class Block:
    name: str
    kind: str
    dim: int
    offset: int = 0

    @property
    def size(self):
        return self.dim * self.dim if self.kind in HERMITIAN_KINDS else self.dim

    def to_value(self, v):
        return hmat(v, self.dim) if self.kind in HERMITIAN_KINDS else np.array(v, dtype=float)

    def to_vec(self, x):
        if self.kind in HERMITIAN_KINDS:
            return hvec(np.asarray(x, dtype=complex))
        return np.asarray(x, dtype=float).ravel()


def _target_vec(t):
    a = np.asarray(t)
    if a.ndim == 0:
        return np.array([float(np.real(a))]), "scalar"
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        return hvec(a.astype(complex)), "hermitian"
    if a.ndim == 1:
        return a.astype(float), "vector"
    raise DimMismatch(f"unsupported constraint target shape {a.shape}")


class ConicProgram:
    """Builder for a conic program; see the module docstring for the form."""

    def __init__(self):
        self.blocks = []
        self._by_name = {}
        self._constraints = []
        self._objective = {}
        self.sense = "min"
        self.n = 0

    def add_block(self, name, dim, cone="psd"):
        if cone not in HERMITIAN_KINDS + VECTOR_KINDS:
            raise ValidationError(f"unknown cone {cone!r}")
        if name in self._by_name:
            raise ValidationError(f"duplicate block {name!r}")
        b = Block(name, cone, int(dim), self.n)
        self.blocks.append(b)
        self._by_name[name] = b
        self.n += b.size
        return b

    def block(self, name):
        return self._by_name[name]

    def add_constraint(self, maps, target):
        """Add ``sum_k maps[k](X_k) = target``.

        ``maps`` sends block names to linear callables, or to a precomputed
        real matrix acting on the vectorized block. ``target`` is a scalar, a
        Hermitian matrix or a real vector; each map must return the same kind.
        """
        tv, kind = _target_vec(target)
        cols = {}
        for name, f in maps.items():
            b = self._by_name[name]
            if callable(f):
                mat = np.empty((tv.size, b.size))
                for j in range(b.size):
                    e = np.zeros(b.size)
                    e[j] = 1.0
                    out, okind = _target_vec(f(b.to_value(e)))
                    if okind != kind or out.size != tv.size:
                        raise DimMismatch(f"map for {name!r} returns {okind} of size {out.size}")
                    mat[:, j] = out
            else:
                mat = np.asarray(f, dtype=float)
                if mat.shape != (tv.size, b.size):
                    raise DimMismatch(f"matrix for {name!r} has shape {mat.shape}")
            cols[name] = mat
        self._constraints.append((cols, tv, maps, kind))

    def set_objective(self, coeffs, sense="min"):
        """Linear objective ``sum_k <C_k, X_k>`` (Re Tr for Hermitian blocks)."""
        if sense not in ("min", "max"):
            raise ValidationError("sense must be 'min' or 'max'")
        self._objective = {k: self._by_name[k].to_vec(v) for k, v in coeffs.items()}
        self.sense = sense

    def assemble(self):
        rows = sum(tv.size for _, tv, _, _ in self._constraints)
        a = np.zeros((rows, self.n))
        b = np.zeros(rows)
        r = 0
        for cols, tv, _, _ in self._constraints:
            for name, mat in cols.items():
                blk = self._by_name[name]
                a[r:r + tv.size, blk.offset:blk.offset + blk.size] += mat
            b[r:r + tv.size] = tv
            r += tv.size
        c = np.zeros(self.n)
        for name, v in self._objective.items():
            blk = self._by_name[name]
            c[blk.offset:blk.offset + blk.size] = v
        return a, b, c

    def check_adjoint(self, rng=None, probes=3):
        """Largest relative violation of <A(x), y> = <x, A^T y> on random probes.

        A(x) is evaluated through the user callables, A^T through the
        tabulated matrix, so a nonlinear or mis-tabulated map shows up here.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        for cols, tv, maps, kind in self._constraints:
            for name, f in maps.items():
                if not callable(f):
                    continue
                blk = self._by_name[name]
                for _ in range(probes):
                    x = rng.standard_normal(blk.size)
                    y = rng.standard_normal(tv.size)
                    ax, _ = _target_vec(f(blk.to_value(x)))
                    lhs = float(ax @ y)
                    rhs = float(x @ (cols[name].T @ y))
                    worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)))
        return worst


@dataclass
class ConicSolution:
    blocks: dict
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    status: str
    iterations: int
    dual_objective: float = float("nan")
    certificate: np.ndarray = None
    state: dict = field(default_factory=dict, repr=False)

    @property
    def optimal(self):
        return self.status == "optimal"


class _Projector:
    """Batched projection onto the product of block cones."""

    def __init__(self, blocks, scale):
        self.groups = {}
        self.vec_blocks = []
        for b in blocks:
            if b.kind in HERMITIAN_KINDS:
                ub = 1.0 / scale[b.name] if b.kind == "box" else np.inf
                g = self.groups.setdefault(b.dim, {"idx": [], "ub": []})
                g["idx"].append(np.arange(b.offset, b.offset + b.size))
                g["ub"].append(ub)
            else:
                self.vec_blocks.append(b)
        for n, g in self.groups.items():
            g["idx"] = np.array(g["idx"])
            g["ub"] = np.array(g["ub"])[:, None]

    def __call__(self, v):
        out = v.copy()
        for n, g in self.groups.items():
            h = hmat(v[g["idx"]], n)
            w, q = np.linalg.eigh(h)
            w = np.clip(w, 0.0, g["ub"])
            out[g["idx"]] = hvec((q * w[:, None, :]) @ q.conj().transpose(0, 2, 1))
        for b in self.vec_blocks:
            if b.kind == "nonneg":
                sl = slice(b.offset, b.offset + b.size)
                out[sl] = np.maximum(v[sl], 0.0)
        return out

    def polar_parts(self, w):
        """Split ``w`` into the part usable in a separation certificate and its support value.

        Returns (w_clean, support) where support = sup over the scaled cone set
        of <w_clean, z>.
        """
        out = w.copy()
        support = 0.0
        for n, g in self.groups.items():
            h = hmat(w[g["idx"]], n)
            ev, q = np.linalg.eigh(h)
            ub = g["ub"]
            finite = np.isfinite(ub[:, 0])
            ev_c = np.where(finite[:, None], ev, np.minimum(ev, 0.0))
            support += float(np.sum(np.where(finite[:, None], np.maximum(ev, 0.0) * np.where(finite[:, None], ub, 0.0), 0.0)))
            out[g["idx"]] = hvec((q * ev_c[:, None, :]) @ q.conj().transpose(0, 2, 1))
        for b in self.vec_blocks:
            sl = slice(b.offset, b.offset + b.size)
            out[sl] = np.minimum(w[sl], 0.0) if b.kind == "nonneg" else 0.0
        return out, support

    def dual_terms(self, s):
        """min over the scaled cone set of <s, z>, plus the dual infeasibility of s."""
        val = 0.0
        infeas = 0.0
        for n, g in self.groups.items():
            ev = np.linalg.eigvalsh(hmat(s[g["idx"]], n))
            neg = np.minimum(ev, 0.0)
            finite = np.isfinite(g["ub"][:, 0])
            val += float(np.sum((neg * np.where(finite[:, None], g["ub"], 0.0))[finite]))
            infeas += float(np.sum(neg[~finite] ** 2))
        for b in self.vec_blocks:
            sl = slice(b.offset, b.offset + b.size)
            if b.kind == "nonneg":
                infeas += float(np.sum(np.minimum(s[sl], 0.0) ** 2))
            else:
                infeas += float(np.sum(s[sl] ** 2))
        return val, np.sqrt(infeas)


def _ruiz(a, blocks, passes=10):
    m, n = a.shape
    e = np.ones(m)
    dvec = np.ones(n)
    for _ in range(passes):
        s = np.abs(e[:, None] * a * dvec[None, :])
        rn = s.max(axis=1) if n else np.ones(m)
        rn[rn == 0] = 1.0
        e /= np.sqrt(rn)
        s = np.abs(e[:, None] * a * dvec[None, :])
        for b in blocks:
            sl = slice(b.offset, b.offset + b.size)
            cn = s[:, sl].max() if m else 1.0
            if cn > 0:
                dvec[sl] /= np.sqrt(cn)
    return e, {b.name: float(dvec[b.offset]) for b in blocks}


def solve(prog, tol=1e-8, max_iters=50000, alpha=1.6, rho=1.0, warm=None,
          check_every=10, raise_on_max_iters=False):
    """Solve a :class:`ConicProgram`.

    Parameters
    ----------
    tol : float
        Relative tolerance for primal residual, dual residual and gap.
    warm : ConicSolution, optional
        Earlier solution of a program with the same block layout; its scaling
        and iterates seed this run.

    Returns
    -------
    ConicSolution
        ``status`` is ``optimal``, ``infeasible-certificate`` or ``max-iters``.
    """
    a, b, c = prog.assemble()
    if prog.sense == "max":
        c = -c
    blocks = prog.blocks
    n = prog.n
    if warm is not None and warm.state.get("n") == n:
        scale = warm.state["scale"]
    else:
        _, scale = _ruiz(a, blocks)
    dvec = np.empty(n)
    for blk in blocks:
        dvec[blk.offset:blk.offset + blk.size] = scale[blk.name]
    e, _ = _ruiz(a * dvec[None, :], [], passes=1) if a.size else (np.ones(0), None)
    at = e[:, None] * a * dvec[None, :]
    bt = e * b
    ct = dvec * c
    if warm is not None and warm.state.get("n") == n:
        cscale = warm.state["cscale"]
    else:
        cmax = np.max(np.abs(ct)) if ct.size else 0.0
        cscale = 1.0 / cmax if cmax > 0 else 1.0
    ct = ct * cscale

    if at.shape[0]:
        uu, sv, vt = np.linalg.svd(at, full_matrices=False)
        r = int(np.sum(sv > 1e-12 * sv[0])) if sv.size and sv[0] > 0 else 0
        ur, sr, vr = uu[:, :r], sv[:r], vt[:r].T
        q = vr @ ((ur.T @ bt) / sr)
        resid = at @ q - bt
    else:
        vr = np.zeros((n, 0))
        ur = np.zeros((0, 0))
        sr = np.zeros(0)
        q = np.zeros(n)
        resid = np.zeros(0)

    proj = _Projector(blocks, scale)

    def unscale(zv):
        return dvec * zv

    def pack(zv, status, it, pres, dres, gap, dobj, cert=None, state=None):
        x = unscale(zv)
        vals = {blk.name: blk.to_value(x[blk.offset:blk.offset + blk.size]) for blk in blocks}
        obj = float(np.dot(c, x))
        if prog.sense == "max":
            obj = -obj
            dobj = -dobj
        return ConicSolution(vals, obj, pres, dres, gap, status, it, dobj, cert, state or {})

    if resid.size and np.linalg.norm(resid) > 1e-9 * (1 + np.linalg.norm(bt)):
        return pack(np.zeros(n), "infeasible-certificate", 0, float(np.linalg.norm(resid)),
                    np.nan, np.nan, np.nan, cert=-resid)

    def aff(v):
        return v - vr @ (vr.T @ v) + q

    if warm is not None and warm.state.get("n") == n:
        z = warm.state["z"].copy()
        u = warm.state["u"].copy()
        rho = warm.state["rho"]
    else:
        z = proj(q)
        u = np.zeros(n)

    du_prev = None
    cert_hits = 0
    it = 0
    pres = dres = gap = np.inf
    dobj = np.nan
    last_adapt = 0
    while it < max_iters:
        it += 1
        x = aff(z - u - ct / rho)
        xh = alpha * x + (1 - alpha) * z
        z_old = z
        z = proj(xh + u)
        du = xh - z
        u = u + du
        if it % check_every and it != max_iters:
            continue
        nx, nz = np.linalg.norm(x), np.linalg.norm(z)
        pres = np.linalg.norm(x - z) / (1 + max(nx, nz))
        ynorm = rho * np.linalg.norm(u)
        dres = rho * np.linalg.norm(z - z_old) / (1 + ynorm)
        g = ct + rho * (x - z_old + u - du)
        s = -rho * (x - z_old + u - du)
        nu = ur @ ((vr.T @ g) / sr) if sr.size else np.zeros(0)
        dval, dinf = proj.dual_terms(s)
        pobj_s = float(ct @ z)
        dobj_s = float(bt @ nu) + dval
        gap = abs(pobj_s - dobj_s) / (1 + abs(pobj_s) + abs(dobj_s))
        dinf_rel = dinf / (1 + np.linalg.norm(ct))
        dobj = dobj_s / cscale
        if pres <= tol and dres <= tol and gap <= tol and dinf_rel <= 10 * tol:
            state = dict(n=n, scale=scale, cscale=cscale, z=z, u=u, rho=rho)
            return pack(z, "optimal", it, float(pres), float(max(dres, dinf_rel)), float(gap),
                        dobj, state=state)
        # infeasibility: u drifts by a constant displacement
        ndu = np.linalg.norm(du)
        if ndu > 1e-7 * (1 + nz) and du_prev is not None:
            cosang = float(du @ du_prev) / (ndu * np.linalg.norm(du_prev) + 1e-300)
            if cosang > 1 - 1e-6:
                w, supp = proj.polar_parts(du)
                nw = np.linalg.norm(w)
                null_part = np.linalg.norm(w - vr @ (vr.T @ w)) if nw > 0 else np.inf
                margin = float(w @ q) - supp
                if nw > 0 and null_part <= 1e-6 * nw and margin > 1e-9 * nw * (1 + np.linalg.norm(q)):
                    cert_hits += 1
                    if cert_hits >= 3:
                        return pack(z, "infeasible-certificate", it, float(pres), float(dres),
                                    np.nan, np.nan, cert=w / nw)
                else:
                    cert_hits = 0
        du_prev = du
        if it - last_adapt >= 50:
            ratio = np.sqrt(max(pres, 1e-300) / max(dres, 1e-300))
            if ratio > 5 or ratio < 0.2:
                new = float(np.clip(rho * ratio, 1e-6, 1e6))
                u *= rho / new
                rho = new
                du_prev = None
                last_adapt = it
    state = dict(n=n, scale=scale, cscale=cscale, z=z, u=u, rho=rho)
    sol = pack(z, "max-iters", it, float(pres), float(dres), float(gap), dobj, state=state)
    if raise_on_max_iters:
        from .errors import MaxIters
        raise MaxIters("conic solver hit the iteration limit",
                       {"primal": sol.primal_residual, "dual": sol.dual_residual, "gap": sol.gap})
    return sol


# ----------------------------------------------------------- program builders

def _top_left(d):
    return lambda y: y[:d, :d]


def _bottom_right(d):
    return lambda y: y[d:, d:]


def _offdiag_objective(d):
    c = np.zeros((2 * d, 2 * d), dtype=complex)
    c[:d, d:] = 0.5 * np.eye(d)
    c[d:, :d] = 0.5 * np.eye(d)
    return c


def fidelity_program(rho, sigma):
    """max Re Tr X s.t. [[rho, X], [X^H, sigma]] >= 0."""
    rho = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    sigma = np.asarray(getattr(sigma, "matrix", sigma), dtype=complex)
    d = rho.shape[0]
    p = ConicProgram()
    p.add_block("Y", 2 * d, "psd")
    p.add_constraint({"Y": _top_left(d)}, rho)
    p.add_constraint({"Y": _bottom_right(d)}, sigma)
    p.set_objective({"Y": _offdiag_objective(d)}, "max")
    return p


def fidelity_sdp(rho, sigma, tol=1e-9, max_iters=100000):
    """Root fidelity computed by the conic solver."""
    sol = solve(fidelity_program(rho, sigma), tol=tol, max_iters=max_iters)
    return sol.objective, sol


def hypothesis_test_program(rho_blocks, sigma_blocks, eps):
    """min sum_k Tr L_k sigma_k s.t. sum_k Tr L_k rho_k >= 1 - eps, 0 <= L_k <= 1."""
    p = ConicProgram()
    maps, obj = {}, {}
    for k, (r, s) in enumerate(zip(rho_blocks, sigma_blocks)):
        r = np.asarray(r, dtype=complex)
        name = f"L{k}"
        p.add_block(name, r.shape[0], "box")
        maps[name] = (lambda rr: (lambda x: np.real(np.trace(rr @ x))))(r)
        obj[name] = np.asarray(s, dtype=complex)
    p.add_block("slack", 1, "nonneg")
    maps["slack"] = lambda v: -v[0]
    p.add_constraint(maps, 1.0 - eps)
    p.set_objective(obj, "min")
    return p


def dominance_program(rho, sigma, lam):
    """Feasibility of rho <= 2^lam sigma with rho' = rho and W = 2^lam sigma - rho'."""
    rho = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    sigma = np.asarray(getattr(sigma, "matrix", sigma), dtype=complex)
    d = rho.shape[0]
    p = ConicProgram()
    p.add_block("R", d, "psd")
    p.add_block("W", d, "psd")
    p.add_constraint({"R": lambda x: x}, rho)
    p.add_constraint({"R": lambda x: x, "W": lambda x: x}, 2.0 ** lam * sigma)
    p.set_objective({}, "min")
    return p
