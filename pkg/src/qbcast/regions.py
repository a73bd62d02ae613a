"""Rate-region evaluation for the broadcast channel with confidential messages.

Constraint labels: ``common`` (R0), ``all`` (R0+R1+Rs), ``confi`` (Rs),
``convex2`` (R1+Rd) and ``convex1`` (Rd). One-shot converse constraints
carry a ``c`` suffix and asymptotic ones an ``aa`` suffix.
"""
from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from . import linalg
from .divergences import (conditional_mutual_information,
                          mutual_information, shannon_entropy)
from .errors import InvalidEpsilon, NotClassical, NotPureEnsemble, QbcError, ValidationError
from .oneshot import d_max_cmi, i_hypo, i_hypo_cond, i_max_tilde_cond
from .states import (BroadcastChannelModel, CQState, DensityOperator, KrausChannel,
                     amplitude_damping_channel, broadcast_from_pair, classical_broadcast_channel,
                     depolarizing_channel, induced_state)

RATES = ("R0", "R1", "Rs", "Rd")


@dataclass
class EpsilonBudget:
    eps1: float
    eps2: float
    delta1: float
    delta2: float
    delta3: float
    eta: float

    def __post_init__(self):
        w = 3 * self.eps1 + 2 * math.sqrt(max(self.eps1, 0.0))
        if not (self.eps1 > 0 and 0 < w < 1):
            raise InvalidEpsilon(f"3 eps' + 2 sqrt(eps') = {w:.4f} must lie in (0, 1)")
        for name in ("delta1", "delta2", "delta3"):
            if not 0 < getattr(self, name) < self.eps1:
                raise InvalidEpsilon(f"{name} must lie in (0, eps')")
        if not 0 < self.eps2 < math.sqrt(2) - 1:
            raise InvalidEpsilon("eps'' must lie in (0, sqrt(2) - 1)")
        if not 0 < self.eta < self.eps2 ** 2:
            raise InvalidEpsilon("eta must lie in (0, eps''^2)")

    @property
    def epsilon(self):
        return max(self.eps1 ** 0.25, self.eps2 ** 0.25)

    def penalty(self, delta):
        return math.log2(4 * self.eps1 / delta ** 2)


@dataclass
class RateQuadruple:
    R0: float = 0.0
    R1: float = 0.0
    Rs: float = 0.0
    Rd: float = 0.0

    def __post_init__(self):
        for r in RATES:
            if not math.isfinite(getattr(self, r)):
                raise ValidationError(f"{r} must be finite")
        if self.Rd < 0:
            raise ValidationError("Rd must be nonnegative")

    def as_dict(self):
        return {r: getattr(self, r) for r in RATES}


@dataclass
class Constraint:
    """sum_r coeffs[r] * r  (<= or >=)  rhs."""

    label: str
    coeffs: dict
    sense: str
    rhs: float
    rhs_optimistic: float = None

    def lhs(self, q):
        return sum(c * getattr(q, r) for r, c in self.coeffs.items())

    def holds(self, q, optimistic=False, tol=0.0):
        rhs = self.rhs_optimistic if optimistic and self.rhs_optimistic is not None else self.rhs
        v = self.lhs(q)
        return v <= rhs + tol if self.sense == "<=" else v >= rhs - tol

    def describe(self):
        lhs = " + ".join(r for r in RATES if r in self.coeffs)
        return f"{self.label}: {lhs} {self.sense} {self.rhs:.6g}"


@dataclass
class RegionReport:
    kind: str
    quantities: dict
    constraints: list
    certified: bool = True
    notes: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def constraint(self, label):
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)

    def contains(self, q, optimistic=False, tol=0.0):
        return all(c.holds(q, optimistic, tol) for c in self.constraints)

    def verdicts(self, quadruples, optimistic=False):
        return [{"rates": q.as_dict(), "member": self.contains(q, optimistic),
                 "per_constraint": {c.label: c.holds(q, optimistic) for c in self.constraints}}
                for q in quadruples]

    def without_secrecy(self):
        """Common/private region obtained by dropping secrecy and randomness constraints.

        Rs folds into R1, leaving the two constraints on R0 and R0 + R1.
        """
        keep = []
        for c in self.constraints:
            if c.label.startswith(("common", "all")):
                keep.append(Constraint(c.label, {r: v for r, v in c.coeffs.items() if r != "Rs"},
                                       c.sense, c.rhs, c.rhs_optimistic))
        return RegionReport(self.kind + "-nosecrecy", dict(self.quantities), keep, self.certified)

    def row(self):
        out = {}
        for k, v in self.quantities.items():
            out[k] = v
        for c in self.constraints:
            out[f"{c.label}_rhs"] = c.rhs
        return out


def _five(common, all_, confi, convex2, convex1, suffix, opt=None):
    opt = opt or {}
    return [
        Constraint("common" + suffix, {"R0": 1}, "<=", common),
        Constraint("all" + suffix, {"R0": 1, "R1": 1, "Rs": 1}, "<=", all_),
        Constraint("confi" + suffix, {"Rs": 1}, "<=", confi, opt.get("confi")),
        Constraint("convex2" + suffix, {"R1": 1, "Rd": 1}, ">=", convex2, opt.get("convex2")),
        Constraint("convex1" + suffix, {"Rd": 1}, ">=", convex1, opt.get("convex1")),
    ]


def _state(model):
    return model if isinstance(model, CQState) else induced_state(model)


def _chain_rule_residual(st):
    lhs = mutual_information(st, "U", "B") + conditional_mutual_information(st, "V", "B", "U")
    return abs(lhs - mutual_information(st, ["U", "V"], "B"))


def achievability_region(model, budget, width=1e-5, tilde_method="bisection"):
    """One-shot inner region on the induced state.

    Smoothed max-information terms enter through the upper end of their
    brackets, which makes every membership verdict certified; the lower
    ends are kept as ``rhs_optimistic``.
    """
    st = _state(model)
    b = budget
    ihub = i_hypo(st, "U", "B", b.eps1 - b.delta1)
    ihuc = i_hypo(st, "U", "C", b.eps1 - b.delta2)
    ihvb = i_hypo_cond(st, "V", "B", "U", b.eps1 - b.delta3)
    t_vc = i_max_tilde_cond(st, "V", "C", "U", b.eps2, width, tilde_method)
    t_xc = i_max_tilde_cond(st, "X", "C", "V", b.eps2, width, tilde_method)
    pen_eta = 2 * math.log2(1 / b.eta)
    m = min(ihub - b.penalty(b.delta1), ihuc - b.penalty(b.delta2))
    vb = ihvb - b.penalty(b.delta3)
    up_vc, up_xc = t_vc.certified_upper, t_xc.certified_upper
    cons = _five(m, vb + m, vb - up_vc - pen_eta, up_vc + up_xc + 2 * pen_eta, up_xc + pen_eta, "",
                 opt={"confi": vb - t_vc.lower - pen_eta,
                      "convex2": t_vc.lower + t_xc.lower + 2 * pen_eta,
                      "convex1": t_xc.lower + pen_eta})
    q = {"I_H(U;B)": ihub, "I_H(U;C)": ihuc, "I_H(V;B|U)": ihvb,
         "Itilde(V;C|U)_lower": t_vc.lower, "Itilde(V;C|U)_heuristic": t_vc.heuristic,
         "Itilde(V;C|U)_upper": t_vc.upper,
         "Itilde(X;C|V)_lower": t_xc.lower, "Itilde(X;C|V)_heuristic": t_xc.heuristic,
         "Itilde(X;C|V)_upper": t_xc.upper, "epsilon": b.epsilon}
    rep = RegionReport("achievability", q, cons)
    rep.checks["chain_rule_residual"] = _chain_rule_residual(st)
    return rep


def converse_region(model, eps, width=1e-5):
    """One-shot outer region: hypothesis-testing terms at eps, smooth D_max terms at sqrt(2 eps)."""
    if not 0 < eps <= 0.25:
        raise InvalidEpsilon("converse requires eps in (0, 1/4]")
    st = _state(model)
    r = math.sqrt(2 * eps)
    ihub = i_hypo(st, "U", "B", eps)
    ihuc = i_hypo(st, "U", "C", eps)
    ihvb = i_hypo_cond(st, "V", "B", "U", eps)
    dvc = d_max_cmi(st, "V", "C", "U", r, width)
    dxc = d_max_cmi(st, "X", "C", "V", r, width)
    m = min(ihub, ihuc)
    cons = _five(m, ihvb + m, ihvb - dvc, dvc + dxc, dxc, "c")
    q = {"I_H(U;B)": ihub, "I_H(U;C)": ihuc, "I_H(V;B|U)": ihvb,
         "Dmax(V;C|U)": dvc, "Dmax(X;C|V)": dxc}
    rep = RegionReport("converse", q, cons, certified=False,
                       notes=["smooth D_max terms are upper ends of a bisection bracket"])
    rep.checks["chain_rule_residual"] = _chain_rule_residual(st)
    return rep


def _asym_report(kind, iub, iuc, ivb, ivc, ixc, suffix="aa"):
    m = min(iub, iuc)
    cons = _five(m, ivb + m, ivb - ivc, ivc + ixc, ixc, suffix)
    q = {"I(U;B)": iub, "I(U;C)": iuc, "I(V;B|U)": ivb, "I(V;C|U)": ivc, "I(X;C|V)": ixc}
    return RegionReport(kind, q, cons)


def asymptotic_region(model, copies=1, cap=2 ** 12):
    """Single-letter von Neumann region; ``copies=2`` evaluates the two-letter state per copy."""
    st = _state(model)
    if copies == 2:
        st = _two_letter(st, cap)
    elif copies != 1:
        raise ValidationError("only one or two letters are supported")
    vals = [mutual_information(st, "U", "B"), mutual_information(st, "U", "C"),
            conditional_mutual_information(st, "V", "B", "U"),
            conditional_mutual_information(st, "V", "C", "U"),
            conditional_mutual_information(st, "X", "C", "V")]
    rep = _asym_report("asymptotic", *[v / copies for v in vals])
    rep.checks["chain_rule_residual"] = _chain_rule_residual(st)
    return rep


def _two_letter(st, cap):
    d = st.quantum_dim ** 2
    if d > cap:
        from .errors import DimensionCapExceeded
        raise DimensionCapExceeded(d, cap)
    probs, blocks = {}, {}
    cu, cv, cx = st.cards
    for k1, p1 in st.probs.items():
        for k2, p2 in st.probs.items():
            key = (k1[0] * cu + k2[0], k1[1] * cv + k2[1], k1[2] * cx + k2[2])
            b1, b2 = st.blocks[k1], st.blocks[k2]
            m = np.kron(b1.matrix, b2.matrix)
            dims = b1.dims + b2.dims
            do = DensityOperator(m, dims, ("B1", "C1", "B2", "C2")).reorder(["B1", "B2", "C1", "C2"])
            dB, dC = b1.dims
            probs[key] = p1 * p2
            blocks[key] = DensityOperator(do.matrix, (dB * dB, dC * dC), ("B", "C"))
    return CQState(("U", "V", "X"), (cu * cu, cv * cv, cx * cx), probs, blocks,
                   (st.quantum_dims[0] ** 2, st.quantum_dims[1] ** 2), ("B", "C"))


def _classical_joint(model):
    outs = model.outputs()
    dB, dC = model.channel.out_dims
    pyz = []
    for o in outs:
        off = o - np.diag(np.diag(o))
        if np.max(np.abs(off)) > 1e-12:
            raise NotClassical("channel output is not diagonal in the computational basis")
        pyz.append(np.real(np.diag(o)).reshape(dB, dC).clip(0, None))
    pyz = np.stack(pyz)
    return np.einsum("uv,vx,xyz->uvxyz", model.p_uv, model.p_x_given_v, pyz)


def _H(p, keep):
    axes = tuple(i for i in range(p.ndim) if i not in keep)
    return shannon_entropy(p.sum(axis=axes).ravel())


def _cmi(p, a, b, c=()):
    return _H(p, a + c) + _H(p, b + c) - _H(p, a + b + c) - (_H(p, c) if c else 0.0)


def classical_fastpath_region(model):
    """Asymptotic region from pmf arithmetic, for channels with diagonal outputs."""
    p = _classical_joint(model)
    U, V, X, Y, Z = 0, 1, 2, 3, 4
    rep = _asym_report("classical", _cmi(p, (U,), (Y,)), _cmi(p, (U,), (Z,)),
                       _cmi(p, (V,), (Y,), (U,)), _cmi(p, (V,), (Z,), (U,)),
                       _cmi(p, (X,), (Z,), (V,)))
    rep.checks["chain_rule_residual"] = abs(_cmi(p, (U,), (Y,)) + _cmi(p, (V,), (Y,), (U,))
                                            - _cmi(p, (U, V), (Y,)))
    return rep


# ------------------------------------------------- quantum-information specialization

def cq_specialization(model, budget=None, eps=None, width=1e-5):
    """Rate pairs (Rc, Rq) for classical plus quantum transmission, with C read as the environment."""
    st = _state(model)
    out = {}
    asym = asymptotic_region(st)
    out["asymptotic"] = {"Rc": asym.quantities["I(U;B)"],
                         "Rq": asym.quantities["I(V;B|U)"] - asym.quantities["I(V;C|U)"]}
    if budget is not None:
        b = budget
        t = i_max_tilde_cond(st, "V", "C", "U", b.eps2, width)
        out["achievability"] = {
            "Rc": i_hypo(st, "U", "B", b.eps1 - b.delta1) - b.penalty(b.delta1),
            "Rq": (i_hypo_cond(st, "V", "B", "U", b.eps1 - b.delta3) - t.certified_upper
                   - b.penalty(b.delta3) - 2 * math.log2(1 / b.eta))}
    if eps is not None:
        if not 0 < eps <= 0.25:
            raise InvalidEpsilon("converse requires eps in (0, 1/4]")
        out["converse"] = {
            "Rc": i_hypo(st, "U", "B", eps),
            "Rq": i_hypo_cond(st, "V", "B", "U", eps)
            - d_max_cmi(st, "V", "C", "U", math.sqrt(2 * eps), width)}
    return out


def with_environment(channel):
    """Broadcast channel A -> B E from a point-to-point channel and its complement."""
    if len(channel.out_dims) != 1:
        raise ValidationError("expected a single-output channel")
    v = channel.isometry()
    dB = channel.out_dims[0]
    dE = v.shape[0] // dB
    return KrausChannel((v,), channel.in_dim, (dB, dE))


def coherent_identity_check(p_u, states_ra, channel, d_r):
    """Residual of I(R>BU) = I(V;B|U) - I(V;E|U) for a pure-state ensemble.

    ``states_ra[u]`` are pure states on R (x) A. The left side uses the
    quantum reference; the right side measures R in each state's Schmidt
    basis across R|BE, turning it into a classical register V.
    """
    p_u = np.asarray(p_u, dtype=float)
    v_iso = channel.isometry()
    dB = channel.out_dims[0]
    dE = v_iso.shape[0] // dB
    big = np.kron(np.eye(d_r), v_iso)
    probs_l, blocks_l = {}, {}
    probs_r, blocks_r = {}, {}
    for u, (pu, s) in enumerate(zip(p_u, states_ra)):
        s = linalg.hermitian_part(s)
        w = np.linalg.eigvalsh(s)
        if abs(w[-1] - 1) > 1e-8 or abs(np.trace(s).real - 1) > 1e-8:
            raise NotPureEnsemble(f"state {u} is not pure")
        if pu <= 0:
            continue
        psi = np.linalg.eigh(s)[1][:, -1]
        phi = big @ psi  # on R (x) B (x) E
        rbe = np.outer(phi, phi.conj())
        probs_l[(u,)] = pu
        blocks_l[(u,)] = DensityOperator(rbe, (d_r, dB, dE), ("R", "B", "E"))
        # Schmidt decomposition across R | BE
        mat = phi.reshape(d_r, dB * dE)
        uu, sv, vh = np.linalg.svd(mat, full_matrices=False)
        for v, (lam, row) in enumerate(zip(sv ** 2, vh)):
            if lam <= 1e-14:
                continue
            be = np.outer(row, row.conj())
            probs_r[(u, v)] = pu * lam
            blocks_r[(u, v)] = DensityOperator(be, (dB, dE), ("B", "E"))
    nu = len(p_u)
    left = CQState(("U",), (nu,), probs_l, blocks_l, (d_r, dB, dE), ("R", "B", "E"))
    right = CQState(("U", "V"), (nu, d_r), probs_r, blocks_r, (dB, dE), ("B", "E"))
    ci = -(_cond_entropy(left, ["R"], ["B", "U"]))
    diff = (conditional_mutual_information(right, "V", "B", "U")
            - conditional_mutual_information(right, "V", "E", "U"))
    return abs(ci - diff), ci, diff


def _cond_entropy(st, a, b):
    from .divergences import marginal_entropy
    return marginal_entropy(st, a + b) - marginal_entropy(st, b)


def random_pure_ensemble(rng, n_u, d_r, d_a):
    p = rng.dirichlet(np.ones(n_u))
    states = []
    for _ in range(n_u):
        states.append(linalg.random_pure(d_r * d_a, rng))
    return p, states


# ------------------------------------------------------------------- scans

def _binary_model(channel, q=0.9, dim=2):
    puv = np.full((2, 2), 0.25)
    pxv = np.array([[q, 1 - q], [1 - q, q]])
    mods = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    return BroadcastChannelModel(puv, pxv, mods, channel)


def _superposition_model(channel, a=0.8, q=0.9):
    """U binary; V correlated with U; X a noisy copy of V."""
    puv = np.array([[a / 2, (1 - a) / 2], [(1 - a) / 2, a / 2]])
    pxv = np.array([[q, 1 - q], [1 - q, q]])
    mods = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    return BroadcastChannelModel(puv, pxv, mods, channel)


FAMILIES = {
    "depolarizing": lambda p: _superposition_model(
        broadcast_from_pair(depolarizing_channel(2, p), depolarizing_channel(2, min(1.0, 0.3 + p)))),
    "amplitude-damping": lambda g: _superposition_model(
        broadcast_from_pair(amplitude_damping_channel(g), amplitude_damping_channel(min(1.0, 0.3 + g)))),
    "bsc": lambda f: _superposition_model(classical_broadcast_channel(_bsc_pair(f, min(0.5, f + 0.1)))),
}


def _bsc_pair(fb, fc):
    p = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            for z in range(2):
                p[x, y, z] = (fb if y != x else 1 - fb) * (fc if z != x else 1 - fc)
    return p


def evaluate(model, which, budget=None, eps=None, width=1e-5):
    if which == "asymptotic":
        return asymptotic_region(model)
    if which == "classical":
        return classical_fastpath_region(model)
    if which == "achievability":
        if budget is None:
            raise ValidationError("achievability needs an epsilon budget")
        return achievability_region(model, budget, width)
    if which == "converse":
        if eps is None:
            raise ValidationError("converse needs eps")
        return converse_region(model, eps, width)
    raise ValidationError(f"unknown region {which!r}")


def scan(family, grid, which="asymptotic", budget=None, eps=None, width=1e-5):
    """Evaluate a region over a parameter grid; failures are recorded in-row."""
    make = FAMILIES[family] if isinstance(family, str) else family
    rows = []
    for g in grid:
        row = {"param": float(g), "error": ""}
        try:
            rep = evaluate(make(g), which, budget, eps, width)
            row.update(rep.row())
            row["chain_rule_residual"] = rep.checks.get("chain_rule_residual", math.nan)
        except (QbcError, ValueError) as e:
            row["error"] = f"{type(e).__name__}: {e}"
        rows.append(row)
    return rows


def header_for(which):
    suffix = {"asymptotic": "aa", "classical": "aa", "achievability": "", "converse": "c"}[which]
    return [f"{s}{suffix}_rhs" for s in ("common", "all", "confi", "convex2", "convex1")]


def rows_to_csv(rows, which, fh=None):
    cols = ["param"]
    for r in rows:
        for k in r:
            if k not in cols and k not in ("error",) and not k.endswith("_rhs"):
                cols.append(k)
    cols += header_for(which) + ["error"]
    buf = fh or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r.get(c, "") for c in cols})
    return buf.getvalue() if fh is None else None
