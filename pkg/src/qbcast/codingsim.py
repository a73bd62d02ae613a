"""Exact small-scale simulation of the layered broadcast code.

Codebooks are shared random states, so every error probability is an
average over codeword tuples drawn from p(u), p(v|u) and p(x|v). The
averages are computed exactly by enumeration (decoding) or by counting
symbol multiplicities (secrecy).
"""
from dataclasses import asdict, dataclass, field
import itertools
import math

import numpy as np
from scipy import signal

from . import linalg
from .errors import DimensionCapExceeded, InvalidEpsilon, OutOfWindow, ValidationError
from .oneshot import hypothesis_test_family, i_max_tilde_cond
from .states import BroadcastChannelModel, induced_state, model_from_json, model_to_json

DEFAULT_CAP = 2 ** 14
COUNT_CAP = 2 ** 21


@dataclass
class CodebookConfig:
    M0: int
    Ms: int
    M1: int
    Md: int
    model: BroadcastChannelModel
    eps1: float = 0.05
    eps2: float = 0.1
    delta1: float = 0.04
    delta2: float = 0.04
    delta3: float = 0.04
    eta: float = 0.005
    seed: int = 0
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        for name in ("M0", "Ms", "M1", "Md"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer")
        for name in ("delta1", "delta2", "delta3"):
            if not 0 < getattr(self, name) < self.eps1:
                raise InvalidEpsilon(f"{name} must lie in (0, eps1)")

    @property
    def rates(self):
        return {k: math.log2(getattr(self, m)) for k, m in
                (("R0", "M0"), ("Rs", "Ms"), ("R1", "M1"), ("Rd", "Md"))}

    def to_json(self):
        d = {k: getattr(self, k) for k in ("M0", "Ms", "M1", "Md", "eps1", "eps2", "delta1",
                                            "delta2", "delta3", "eta", "seed")}
        d["model"] = model_to_json(self.model)
        return d

    @classmethod
    def from_json(cls, obj):
        try:
            kw = {k: obj[k] for k in ("M0", "Ms", "M1", "Md")}
        except KeyError as e:
            raise ValidationError(f"config is missing {e}") from None
        for k in ("eps1", "eps2", "delta1", "delta2", "delta3", "eta", "seed"):
            if k in obj:
                kw[k] = obj[k]
        return cls(model=model_from_json(obj["model"]), **kw)


@dataclass
class SimReport:
    p_error_common_B: float = math.nan
    p_error_common_C: float = math.nan
    p_error_pair: float = math.nan
    hn_bound_common_B: float = math.nan
    hn_bound_common_C: float = math.nan
    hn_bound_pair: float = math.nan
    hn_bound_pair_printed: float = math.nan
    secrecy_tv: list = field(default_factory=list)
    secrecy_bound: float = math.nan
    secrecy_conditions: dict = field(default_factory=dict)
    c_star: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_json(self):
        return asdict(self)

    def violations(self, tol=1e-7):
        """Names of checks where an exact value exceeds its applicable bound."""
        bad = []
        for ex, bd, name in ((self.p_error_common_B, self.hn_bound_common_B, "common_B"),
                             (self.p_error_common_C, self.hn_bound_common_C, "common_C"),
                             (self.p_error_pair, self.hn_bound_pair, "pair")):
            if bd <= 1 and ex > bd + tol:
                bad.append(name)
        if self.secrecy_conditions.get("applicable") and self.secrecy_tv:
            if max(self.secrecy_tv) > self.secrecy_bound + tol:
                bad.append("secrecy")
        return bad


def c_star(eps, delta):
    """Minimizer of (1+c)(eps-delta) + (2+c+1/c) * const over c, in the form used by the bound."""
    return delta / (2 * eps - delta)


def hn_bound(eps, delta, log_count, info):
    c = c_star(eps, delta)
    return (1 + c) * (eps - delta) + (2 + c + 1 / c) * 2.0 ** (log_count - info), c


# --------------------------------------------------------------- decoders

@dataclass
class SRMFamily:
    """Square-root measurements built from per-symbol binary test operators.

    For a codebook tuple (s_1..s_M) the POVM is
    Omega_m = S^-1/2 T_{s_m} S^-1/2 with S = sum_m T_{s_m}, plus an abort
    element 1 - Pi_supp(S).
    """

    tests: dict
    dim: int

    def povm(self, tup):
        ts = [self.tests[s] for s in tup]
        S = sum(ts)
        g = linalg.inv_sqrt_on_support(S) if np.max(np.abs(S)) > 0 else np.zeros_like(S)
        elems = [g @ t @ g for t in ts]
        elems.append(np.eye(self.dim) - sum(elems))
        return elems

    def completeness_residual(self, tup):
        """Deviation of the abort element from a projector onto ker(S)."""
        ts = [self.tests[s] for s in tup]
        S = sum(ts)
        elems = self.povm(tup)
        ker = np.eye(self.dim) - (linalg.support_projector(S) if np.max(np.abs(S)) > 0
                                  else np.zeros_like(S))
        return float(np.max(np.abs(elems[-1] - ker)))


def _state(cfg):
    return induced_state(cfg.model)


def _layer1_tests(st, receiver, eps):
    fam, test = hypothesis_test_family(st, "U", receiver, (), eps)
    tests, states, pu = {}, {}, {}
    for key, lam, r in zip(fam.keys, test.blocks, fam.rho):
        u = key[1][0]
        p = float(np.real(np.trace(r)))
        if p <= 0:
            continue
        tests[u] = lam
        states[u] = r / p
        pu[u] = p
    return tests, states, pu, test


def build_srm_layer1(cfg, receiver="B"):
    """Square-root decoder family for the common message at ``receiver``."""
    eps = cfg.eps1 - (cfg.delta1 if receiver == "B" else cfg.delta2)
    tests, _, pu, _ = _layer1_tests(_state(cfg), receiver, eps)
    d = next(iter(tests.values())).shape[0]
    _check_size(len(pu) ** cfg.M0 * d, cfg.cap)
    return SRMFamily(tests, d)


def _check_size(size, cap):
    if size > cap:
        raise DimensionCapExceeded(size, cap)


def _srm_error(tests, states, probs, M, d):
    """sum over tuples of prod p(s_i) * Tr[(1 - Omega_1) rho_{s_1}]."""
    syms = sorted(probs)
    err = 0.0
    fam = SRMFamily(tests, d)
    for tup in itertools.product(syms, repeat=M):
        w = math.prod(probs[s] for s in tup)
        if w == 0:
            continue
        om1 = fam.povm(tup)[0]
        err += w * (1.0 - float(np.real(np.trace(om1 @ states[tup[0]]))))
    return min(max(err, 0.0), 1.0)


def simulate_common(cfg, receivers=("B", "C")):
    """Exact common-message error at each receiver with its bound."""
    st = _state(cfg)
    rep = SimReport()
    for rcv in receivers:
        delta = cfg.delta1 if rcv == "B" else cfg.delta2
        eps = cfg.eps1 - delta
        tests, states, pu, test = _layer1_tests(st, rcv, eps)
        d = next(iter(tests.values())).shape[0]
        _check_size(len(pu) ** cfg.M0 * d, cfg.cap)
        err = _srm_error(tests, states, pu, cfg.M0, d)
        bound, c = hn_bound(cfg.eps1, delta, math.log2(cfg.M0), test.value)
        setattr(rep, f"p_error_common_{rcv}", err)
        setattr(rep, f"hn_bound_common_{rcv}", bound)
        rep.c_star[f"common_{rcv}"] = c
        rep.details[f"I_H(U;{rcv})"] = test.value
        rep.details[f"type1_common_{rcv}"] = test.type1
    return rep


def simulate_pair(cfg):
    """Exact error of the second-layer decoder given the common message.

    The bound uses the count of second-layer codewords, 2^(Rs+R1); the
    variant with exponent R0+Rs is reported alongside.
    """
    st = _state(cfg)
    eps = cfg.eps1 - cfg.delta3
    fam, test = hypothesis_test_family(st, "V", "B", "U", eps)
    M = cfg.Ms * cfg.M1
    groups = {}
    for key, lam, r in zip(fam.keys, test.blocks, fam.rho):
        u, v = key[0][0], key[1][0]
        p = float(np.real(np.trace(r)))
        groups.setdefault(u, {})[v] = (lam, r, p)
    d = test.blocks[0].shape[0]
    pu = {u: sum(p for _, _, p in g.values()) for u, g in groups.items()}
    total = 0.0
    for u, g in groups.items():
        if pu[u] <= 0:
            continue
        tests = {v: lam for v, (lam, _, p) in g.items() if p > 0}
        states = {v: r / p for v, (_, r, p) in g.items() if p > 0}
        probs = {v: p / pu[u] for v, (_, _, p) in g.items() if p > 0}
        _check_size(len(probs) ** M * d, cfg.cap)
        total += pu[u] * _srm_error(tests, states, probs, M, d)
    rep = SimReport()
    rep.p_error_pair = min(total, 1.0)
    r = cfg.rates
    rep.hn_bound_pair, c = hn_bound(cfg.eps1, cfg.delta3, r["Rs"] + r["R1"], test.value)
    rep.hn_bound_pair_printed, _ = hn_bound(cfg.eps1, cfg.delta3, r["R0"] + r["Rs"], test.value)
    rep.c_star["pair"] = c
    rep.details["I_H(V;B|U)"] = test.value
    rep.details["type1_pair"] = test.type1
    return rep


# --------------------------------------------------------------- secrecy

def _power(base, k, conv):
    out = None
    while k:
        if k & 1:
            out = base if out is None else conv(out, base)
        k >>= 1
        if k:
            base = conv(base, base)
    return out


def _count_distribution(p_x_given_v, p_v, M1, Md, nx):
    """Law of the symbol-count vector of M1 * Md codewords, as an array over the first nx-1 counts."""
    shape_one = (2,) * (nx - 1)

    def conv(a, b):
        c = signal.convolve(a, b, method="direct" if a.size * b.size < 4e6 else "fft")
        c = np.clip(np.real(c), 0, None)
        return c / c.sum()

    q = None
    for v, pv in p_v.items():
        if pv <= 0:
            continue
        single = np.zeros(shape_one)
        for x in range(nx):
            idx = tuple(1 if i == x else 0 for i in range(nx - 1))
            single[idx] += p_x_given_v[v, x]
        mult = _power(single, Md, conv) * pv
        if q is None:
            q = mult
        else:
            if mult.shape != q.shape:
                raise ValidationError("count arrays disagree in shape")
            q = q + mult
    return _power(q / q.sum(), M1, conv)


def secrecy_distance(model, M1, Md, count_cap=COUNT_CAP):
    """Codebook-averaged trace distance between Charlie's state and the constant state.

    Returns (distance, tail) per u in a dict; ``tail`` is the probability
    mass dropped as numerically zero, which is added to the distance.
    """
    nx = model.nx
    N = M1 * Md
    n_entries = (N + 1) ** (nx - 1)
    if n_entries > count_cap:
        raise DimensionCapExceeded(n_entries, count_cap)
    outs = model.outputs()
    rho_c = [linalg.partial_trace(o, model.channel.out_dims, [1]) for o in outs]
    out = {}
    for u in range(model.nu):
        pu = float(model.p_uv[u].sum())
        if pu <= 0:
            continue
        p_v = {v: model.p_uv[u, v] / pu for v in range(model.nv)}
        p_x = np.array(sum(p_v[v] * model.p_x_given_v[v] for v in p_v))
        target = sum(p_x[x] * rho_c[x] for x in range(nx))
        law = _count_distribution(model.p_x_given_v, p_v, M1, Md, nx)
        idx = np.argwhere(law > 1e-300)
        w = law[tuple(idx.T)]
        counts = np.concatenate([idx, N - idx.sum(axis=1, keepdims=True)], axis=1) / N
        mats = np.einsum("kx,xij->kij", counts, np.stack(rho_c)) - target
        ev = np.linalg.eigvalsh(mats)
        tv = 0.5 * np.abs(ev).sum(axis=1)
        dist = float(np.dot(w, tv))
        tail = max(1.0 - float(w.sum()), 0.0)
        out[u] = (min(dist + tail, 1.0), tail, pu)
    return out


def secrecy_budget(eps2, eta):
    """Triangle-inequality budget for two nested convex-split steps."""
    return 2 * (2 * eps2 + eta)


def secrecy_conditions(cfg, tilde=None, width=1e-5):
    """Check the rate conditions under which the secrecy budget is claimed.

    ``tilde`` may supply (I~(V;C|U), I~(X;C|V)) values that upper-bound the
    smoothed quantities; otherwise they are computed with certified upper ends.
    """
    if tilde is None:
        st = _state(cfg)
        b1 = i_max_tilde_cond(st, "V", "C", "U", cfg.eps2, width)
        b2 = i_max_tilde_cond(st, "X", "C", "V", cfg.eps2, width)
        tilde = (b1.certified_upper, b2.certified_upper)
    t1, t2 = tilde
    r = cfg.rates
    pen = 2 * math.log2(1 / cfg.eta)
    eq8 = r["R1"] + r["Rd"] >= t1 + t2 + 2 * pen
    eq9 = r["Rd"] >= t2 + pen
    layer = r["R1"] >= t1 + pen
    return {"tilde_VC_given_U": t1, "tilde_XC_given_V": t2, "eq8": bool(eq8), "eq9": bool(eq9),
            "layer_rate": bool(layer), "applicable": bool(eq8 and eq9 and layer)}


def simulate_secrecy(cfg, tilde=None, width=1e-5):
    """Exact secrecy distance per common message against the convex-split budget.

    The budget is claimed only when the theorem's dummy-rate conditions and
    the per-layer rate condition R1 >= I~(V;C|U) + 2 log(1/eta) all hold.
    """
    per_u = secrecy_distance(cfg.model, cfg.M1, cfg.Md)
    dist = float(sum(pu * d for d, _, pu in per_u.values()))
    rep = SimReport()
    rep.secrecy_tv = [dist] * cfg.M0
    rep.secrecy_bound = secrecy_budget(cfg.eps2, cfg.eta)
    rep.secrecy_conditions = secrecy_conditions(cfg, tilde, width)
    rep.details["secrecy_tail_mass"] = float(sum(pu * t for _, t, pu in per_u.values()))
    rep.details["secrecy_per_u"] = {str(u): d for u, (d, _, _) in per_u.items()}
    return rep


def secrecy_distance_bruteforce(model, M1, Md):
    """Enumerate every codebook; only for tiny M1, Md (test oracle and cross-check)."""
    outs = model.outputs()
    rho_c = [linalg.partial_trace(o, model.channel.out_dims, [1]) for o in outs]
    total = 0.0
    for u in range(model.nu):
        pu = model.p_uv[u].sum()
        if pu <= 0:
            continue
        pv = model.p_uv[u] / pu
        px = pv @ model.p_x_given_v
        target = sum(px[x] * rho_c[x] for x in range(model.nx))
        for vs in itertools.product(range(model.nv), repeat=M1):
            wv = math.prod(pv[v] for v in vs)
            if wv == 0:
                continue
            for xs in itertools.product(range(model.nx), repeat=M1 * Md):
                w = wv * math.prod(model.p_x_given_v[vs[i // Md], x] for i, x in enumerate(xs))
                if w == 0:
                    continue
                avg = sum(rho_c[x] for x in xs) / (M1 * Md)
                total += pu * w * 0.5 * linalg.trace_norm_hermitian(avg - target)
    return total


def simulate(cfg, tilde=None):
    """All three simulations merged into one report."""
    rep = simulate_common(cfg)
    pair = simulate_pair(cfg)
    sec = simulate_secrecy(cfg, tilde)
    rep.p_error_pair = pair.p_error_pair
    rep.hn_bound_pair = pair.hn_bound_pair
    rep.hn_bound_pair_printed = pair.hn_bound_pair_printed
    rep.secrecy_tv = sec.secrecy_tv
    rep.secrecy_bound = sec.secrecy_bound
    rep.secrecy_conditions = sec.secrecy_conditions
    rep.c_star.update(pair.c_star)
    rep.details.update(pair.details)
    rep.details.update(sec.details)
    return rep


# ------------------------------------------------------------- expurgation

def expurgation_budget(eps1, eps2, eta):
    """Markov-inequality arithmetic turning average guarantees into one good code."""
    window = 3 * eps1 + 2 * math.sqrt(eps1)
    if not (eps1 > 0 and 0 < window < 1):
        raise OutOfWindow(f"3*eps1 + 2*sqrt(eps1) = {window:.4f} is outside (0, 1)")
    if not 0 < eps2 < math.sqrt(2) - 1:
        raise OutOfWindow(f"eps2 = {eps2} is outside (0, sqrt(2)-1)")
    if not 0 < eta < eps2 ** 2:
        raise OutOfWindow(f"eta = {eta} is outside (0, eps2^2)")
    pr_err = 3 * eps1 ** 0.75 + 2 * eps1 ** 0.25
    pr_sec = 4 * eps2 ** 0.75 + 2 * eps2 ** 1.75
    return {"error_average": window,
            "secrecy_average": 4 * eps1 + 2 * eta,
            "pr_error_exceeds": pr_err,
            "pr_secrecy_exceeds": pr_sec,
            "good_code_probability": 1 - pr_err - pr_sec,
            "epsilon": max(eps1 ** 0.25, eps2 ** 0.25)}
