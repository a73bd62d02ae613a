"""States, classical-quantum states, channels and broadcast models.

Classical registers of a :class:`CQState` stay symbolic: a probability per
symbol tuple plus a density operator per tuple on the quantum systems.
"""
from dataclasses import dataclass
import itertools
import json

import numpy as np

from . import linalg
from .errors import (BadPartition, DimMismatch, NegativeEigenvalue, NonFinite,
                     NotTracePreserving, ValidationError, ZeroProbabilitySymbol)

STATE_TOL = 1e-9
PROB_TOL = 1e-9


def _default_labels(n):
    base = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    return tuple(base[i] if i < 26 else f"S{i}" for i in range(n))


@dataclass(frozen=True)
class DensityOperator:
    """Unit-trace PSD matrix with labeled subsystem dimensions."""

    matrix: np.ndarray
    dims: tuple = None
    labels: tuple = None

    def __post_init__(self):
        m = linalg.hermitian_part(self.matrix)
        dims = (m.shape[0],) if self.dims is None else tuple(int(d) for d in self.dims)
        if int(np.prod(dims)) != m.shape[0]:
            raise DimMismatch(f"dims {dims} do not multiply to {m.shape[0]}")
        labels = _default_labels(len(dims)) if self.labels is None else tuple(self.labels)
        if len(labels) != len(dims) or len(set(labels)) != len(labels):
            raise DimMismatch(f"labels {labels} do not match dims {dims}")
        tr = np.trace(m).real
        if abs(tr - 1) > STATE_TOL:
            raise ValidationError(f"trace {tr:.12f} differs from 1 by more than {STATE_TOL:g}")
        w = np.linalg.eigvalsh(m)
        if w[0] < -STATE_TOL:
            raise NegativeEigenvalue(f"minimum eigenvalue {w[0]:.3e} below -{STATE_TOL:g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise BadPartition(f"unknown subsystem label {label!r}") from None

    def reduce(self, keep):
        """Marginal on the labels in ``keep`` (order as stored)."""
        idx = sorted(self.index(l) for l in keep)
        m = linalg.partial_trace(self.matrix, self.dims, idx)
        return DensityOperator(m, tuple(self.dims[i] for i in idx),
                               tuple(self.labels[i] for i in idx))

    def reorder(self, labels):
        order = [self.index(l) for l in labels]
        if sorted(order) != list(range(len(self.dims))):
            raise BadPartition(f"{labels} is not a permutation of {self.labels}")
        m = linalg.permute_systems(self.matrix, self.dims, order)
        return DensityOperator(m, tuple(self.dims[i] for i in order), tuple(labels))


def density(matrix, dims=None, labels=None):
    return DensityOperator(np.asarray(matrix, dtype=complex), dims, labels)


@dataclass(frozen=True)
class CQState:
    """State classical on some registers, quantum on the rest.

    ``probs`` and ``blocks`` are keyed by tuples of classical symbols, one
    entry per classical label. Only tuples with positive weight are stored.
    """

    classical_labels: tuple
    cards: tuple
    probs: dict
    blocks: dict
    quantum_dims: tuple = ()
    quantum_labels: tuple = ()

    def __post_init__(self):
        cl = tuple(self.classical_labels)
        cards = tuple(int(c) for c in self.cards)
        if len(cl) != len(cards):
            raise DimMismatch("one cardinality per classical label is required")
        ql = tuple(self.quantum_labels)
        qd = tuple(int(d) for d in self.quantum_dims)
        if len(ql) != len(qd) or len(set(cl + ql)) != len(cl) + len(ql):
            raise DimMismatch("labels must be distinct and match dims")
        probs, blocks = {}, {}
        total = 0.0
        dq = int(np.prod(qd)) if qd else 1
        for key, p in self.probs.items():
            key = tuple(int(k) for k in key)
            if len(key) != len(cl) or any(not 0 <= k < c for k, c in zip(key, cards)):
                raise DimMismatch(f"symbol tuple {key} invalid for cards {cards}")
            p = float(p)
            if not np.isfinite(p):
                raise NonFinite("probability is not finite")
            if p < -PROB_TOL:
                raise ValidationError(f"negative probability {p}")
            total += p
            if p <= 0:
                continue
            b = self.blocks[key] if key in self.blocks else self.blocks[tuple(key)]
            b = b if isinstance(b, DensityOperator) else DensityOperator(b, qd or None, ql or None)
            if b.dim != dq:
                raise DimMismatch(f"block {key} has dimension {b.dim}, expected {dq}")
            probs[key] = p
            blocks[key] = b
        if abs(total - 1) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {total:.12f}")
        object.__setattr__(self, "classical_labels", cl)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "quantum_labels", ql)
        object.__setattr__(self, "quantum_dims", qd)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "blocks", blocks)

    @property
    def labels(self):
        return self.classical_labels + self.quantum_labels

    @property
    def quantum_dim(self):
        return int(np.prod(self.quantum_dims)) if self.quantum_dims else 1

    @property
    def full_dim(self):
        return int(np.prod(self.cards)) * self.quantum_dim

    def is_classical(self, label):
        if label in self.classical_labels:
            return True
        if label in self.quantum_labels:
            return False
        raise BadPartition(f"unknown label {label!r}")

    def weighted_blocks(self):
        """Yield (key, p * block) pairs."""
        for k, p in self.probs.items():
            yield k, p * self.blocks[k].matrix

    def expand(self, cap=None):
        """Full block-diagonal density operator, classical systems first."""
        n = self.full_dim
        if cap is not None and n > cap:
            from .errors import DimensionCapExceeded
            raise DimensionCapExceeded(n, cap)
        dq = self.quantum_dim
        m = np.zeros((n, n), dtype=complex)
        for key, wb in self.weighted_blocks():
            i = int(np.ravel_multi_index(key, self.cards)) if key else 0
            m[i * dq:(i + 1) * dq, i * dq:(i + 1) * dq] = wb
        return DensityOperator(m, self.cards + self.quantum_dims, self.labels)

    def marginalize(self, drop):
        """Remove the labels in ``drop``; classical ones are summed out.

        Returns a :class:`DensityOperator` once no classical label remains.
        """
        drop = set(drop)
        for l in drop:
            self.is_classical(l)
        keep_c = [i for i, l in enumerate(self.classical_labels) if l not in drop]
        keep_q = [i for i, l in enumerate(self.quantum_labels) if l not in drop]
        qd = tuple(self.quantum_dims[i] for i in keep_q)
        ql = tuple(self.quantum_labels[i] for i in keep_q)
        acc_p, acc_m = {}, {}
        for key, wb in self.weighted_blocks():
            if len(keep_q) != len(self.quantum_labels):
                wb = linalg.partial_trace(wb, self.quantum_dims or (1,), keep_q) \
                    if self.quantum_dims else wb
            nk = tuple(key[i] for i in keep_c)
            acc_p[nk] = acc_p.get(nk, 0.0) + self.probs[key]
            acc_m[nk] = acc_m.get(nk, 0) + wb
        blocks = {k: acc_m[k] / acc_p[k] for k in acc_p}
        if not keep_c:
            m = blocks[()]
            if not qd:
                qd, ql = (1,), ("trivial",)
            return DensityOperator(m, qd, ql)
        return CQState(tuple(self.classical_labels[i] for i in keep_c),
                       tuple(self.cards[i] for i in keep_c), acc_p, blocks, qd, ql)

    def keep(self, labels):
        labels = set(labels)
        return self.marginalize([l for l in self.labels if l not in labels])

    def condition_on(self, label, symbol):
        if label not in self.classical_labels:
            raise BadPartition(f"{label!r} is not a classical label")
        i = self.classical_labels.index(label)
        sel = {k: p for k, p in self.probs.items() if k[i] == symbol}
        z = sum(sel.values())
        if z <= 0:
            raise ZeroProbabilitySymbol(f"P({label}={symbol}) = 0")
        strip = lambda k: k[:i] + k[i + 1:]
        probs = {strip(k): p / z for k, p in sel.items()}
        blocks = {strip(k): self.blocks[k] for k in sel}
        return CQState(self.classical_labels[:i] + self.classical_labels[i + 1:],
                       self.cards[:i] + self.cards[i + 1:], probs, blocks,
                       self.quantum_dims, self.quantum_labels)

    def marginal_probs(self, labels):
        idx = [self.classical_labels.index(l) for l in labels]
        out = {}
        for k, p in self.probs.items():
            nk = tuple(k[i] for i in idx)
            out[nk] = out.get(nk, 0.0) + p
        return out


def from_density(state, classical):
    """Reinterpret labels ``classical`` of ``state`` as classical registers.

    The state must be block diagonal in the computational basis of those
    systems (checked to 1e-9).
    """
    classical = list(classical)
    quantum = [l for l in state.labels if l not in classical]
    st = state.reorder(classical + quantum)
    cards = tuple(st.dims[:len(classical)])
    qd = tuple(st.dims[len(classical):])
    dq = int(np.prod(qd)) if qd else 1
    m = st.matrix
    nc = int(np.prod(cards)) if cards else 1
    t = m.reshape(nc, dq, nc, dq)
    off = t.copy()
    idx = np.arange(nc)
    off[idx, :, idx, :] = 0
    if np.max(np.abs(off), initial=0.0) > STATE_TOL:
        from .errors import NotClassical
        raise NotClassical(f"state is not block diagonal on {classical}")
    probs, blocks = {}, {}
    for i, key in enumerate(itertools.product(*[range(c) for c in cards])):
        b = t[i, :, i, :]
        p = np.trace(b).real
        if p > PROB_TOL * 1e-3:
            probs[key] = p
            blocks[key] = b / p
    z = sum(probs.values())
    probs = {k: v / z for k, v in probs.items()}
    if not qd:
        qd, ql = (1,), ("trivial",)
    else:
        ql = tuple(quantum)
    return CQState(tuple(classical), cards, probs, blocks, qd, ql)


def as_cq(state):
    """Wrap a DensityOperator as a CQState without classical registers."""
    if isinstance(state, CQState):
        return state
    if not isinstance(state, DensityOperator):
        state = density(state)
    return CQState((), (), {(): 1.0}, {(): state}, state.dims, state.labels)


@dataclass(frozen=True)
class KrausChannel:
    """Channel A -> (out systems) in Kraus form."""

    kraus_ops: tuple
    in_dim: int
    out_dims: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        dout = int(np.prod(self.out_dims))
        for k in ops:
            if k.shape != (dout, self.in_dim):
                raise DimMismatch(f"Kraus operator shape {k.shape}, expected {(dout, self.in_dim)}")
            if not np.all(np.isfinite(k)):
                raise NonFinite("Kraus operator has NaN or Inf entries")
        s = sum(k.conj().T @ k for k in ops)
        err = np.max(np.abs(s - np.eye(self.in_dim)))
        if err > STATE_TOL:
            raise NotTracePreserving(f"sum K^H K deviates from identity by {err:.3e}")
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        object.__setattr__(self, "out_dims", tuple(int(d) for d in self.out_dims))

    def apply(self, rho):
        m = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
        if m.shape != (self.in_dim, self.in_dim):
            raise DimMismatch(f"input dimension {m.shape[0]}, channel expects {self.in_dim}")
        return sum(k @ m @ k.conj().T for k in self.kraus_ops)

    def isometry(self):
        """Stinespring isometry A -> out (x) E, environment last."""
        ne = len(self.kraus_ops)
        dout = int(np.prod(self.out_dims))
        v = np.zeros((dout * ne, self.in_dim), dtype=complex)
        for i, k in enumerate(self.kraus_ops):
            v[i::ne, :] = k
        return v

    def complementary(self):
        """Channel A -> (out..., E) keeping the environment as a final system."""
        v = self.isometry()
        return KrausChannel((v,), self.in_dim, self.out_dims + (len(self.kraus_ops),))


def apply_channel(ch, rho, labels=("B", "C")):
    m = ch.apply(rho)
    labels = tuple(labels)[:len(ch.out_dims)] if len(labels) >= len(ch.out_dims) \
        else _default_labels(len(ch.out_dims))
    return DensityOperator(m, ch.out_dims, labels)


def identity_channel(d):
    return KrausChannel((np.eye(d),), d, (d,))


def depolarizing_channel(d, p):
    """rho -> (1-p) rho + p I/d, built from the Weyl operators."""
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    ops = []
    for a in range(d):
        for b in range(d):
            w = np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b)
            c = np.sqrt(1 - p + p / d**2) if a == b == 0 else np.sqrt(p) / d
            ops.append(c * w)
    return KrausChannel(tuple(ops), d, (d,))


def amplitude_damping_channel(gamma):
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    return KrausChannel((k0, k1), 2, (2,))


def tensor_channel(ch1, ch2):
    """Parallel channel A1 A2 -> out1 out2."""
    ops = tuple(np.kron(a, b) for a in ch1.kraus_ops for b in ch2.kraus_ops)
    return KrausChannel(ops, ch1.in_dim * ch2.in_dim, ch1.out_dims + ch2.out_dims)


def broadcast_from_pair(ch_b, ch_c):
    """Broadcast channel A -> BC feeding a copy of a classical input to two channels.

    The input is first dephased and copied, so this models classical
    broadcast with independent quantum noise on each branch.
    """
    d = ch_b.in_dim
    ops = []
    for x in range(d):
        e = np.zeros((d * d, d))
        e[x * d + x, x] = 1.0
        for a in ch_b.kraus_ops:
            for b in ch_c.kraus_ops:
                ops.append(np.kron(a, b) @ e)
    return KrausChannel(tuple(ops), d, ch_b.out_dims + ch_c.out_dims)


def classical_broadcast_channel(p_yz_given_x):
    """Diagonal embedding of a classical channel p(y,z|x)."""
    p = np.asarray(p_yz_given_x, dtype=float)
    nx, ny, nz = p.shape
    ops = []
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if p[x, y, z] > 0:
                    k = np.zeros((ny * nz, nx))
                    k[y * nz + z, x] = np.sqrt(p[x, y, z])
                    ops.append(k)
    return KrausChannel(tuple(ops), nx, (ny, nz))


@dataclass(frozen=True)
class BroadcastChannelModel:
    """Channel N^{A->BC} with auxiliary distribution p(u,v) p(x|v) and modulator."""

    p_uv: np.ndarray
    p_x_given_v: np.ndarray
    modulator: tuple
    channel: KrausChannel

    def __post_init__(self):
        puv = np.array(self.p_uv, dtype=float)
        pxv = np.array(self.p_x_given_v, dtype=float)
        if puv.ndim != 2 or pxv.ndim != 2:
            raise DimMismatch("p_uv and p_x_given_v must be 2-d tables")
        if not (np.all(np.isfinite(puv)) and np.all(np.isfinite(pxv))):
            raise NonFinite("distribution has NaN or Inf")
        if np.any(puv < -PROB_TOL) or np.any(pxv < -PROB_TOL):
            raise ValidationError("negative probability")
        if abs(puv.sum() - 1) > PROB_TOL:
            raise ValidationError(f"p_uv sums to {puv.sum():.12f}")
        if pxv.shape[0] != puv.shape[1]:
            raise DimMismatch("p_x_given_v rows must match |V|")
        if np.any(np.abs(pxv.sum(axis=1) - 1) > PROB_TOL):
            raise ValidationError("rows of p_x_given_v must sum to 1")
        mods = tuple(m if isinstance(m, DensityOperator) else density(m) for m in self.modulator)
        if len(mods) != pxv.shape[1]:
            raise DimMismatch("one modulator state per input symbol x is required")
        for m in mods:
            if m.dim != self.channel.in_dim:
                raise DimMismatch("modulator dimension differs from channel input")
        if len(self.channel.out_dims) != 2:
            raise DimMismatch("broadcast channel needs out_dims [dB, dC]")
        puv = np.clip(puv, 0, None)
        pxv = np.clip(pxv, 0, None)
        object.__setattr__(self, "p_uv", puv)
        object.__setattr__(self, "p_x_given_v", pxv)
        object.__setattr__(self, "modulator", mods)

    @property
    def nu(self):
        return self.p_uv.shape[0]

    @property
    def nv(self):
        return self.p_uv.shape[1]

    @property
    def nx(self):
        return self.p_x_given_v.shape[1]

    def outputs(self):
        """Channel outputs N(rho_x) on BC, one per x."""
        return [self.channel.apply(m) for m in self.modulator]


def induced_state(model):
    """The cq state over classical U, V, X and quantum B, C."""
    outs = model.outputs()
    probs, blocks = {}, {}
    for u, v, x in itertools.product(range(model.nu), range(model.nv), range(model.nx)):
        p = model.p_uv[u, v] * model.p_x_given_v[v, x]
        if p > 0:
            probs[(u, v, x)] = p
            blocks[(u, v, x)] = outs[x]
    return CQState(("U", "V", "X"), (model.nu, model.nv, model.nx), probs, blocks,
                   model.channel.out_dims, ("B", "C"))


# ---------------------------------------------------------------- JSON

def _mat_to_json(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _mat_from_json(obj, what="matrix"):
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{what}: entries must be [re, im] pairs") from e
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{what}: expected a square array of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def _rect_from_json(obj, what="matrix"):
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{what}: entries must be [re, im] pairs") from e
    if a.ndim != 3 or a.shape[2] != 2:
        raise ValidationError(f"{what}: expected an array of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def state_to_json(s):
    return {"dims": list(s.dims), "labels": list(s.labels), "matrix": _mat_to_json(s.matrix)}


def state_from_json(obj):
    if not isinstance(obj, dict) or "matrix" not in obj:
        raise ValidationError("state: missing 'matrix'")
    m = _mat_from_json(obj["matrix"], "state.matrix")
    return DensityOperator(m, obj.get("dims"), obj.get("labels"))


def _key_str(k):
    return ",".join(str(i) for i in k)


def _key_parse(s):
    s = str(s).strip()
    return tuple(int(t) for t in s.split(",")) if s else ()


def cqstate_to_json(s):
    return {
        "classical": [{"label": l, "card": c} for l, c in zip(s.classical_labels, s.cards)],
        "probs": {_key_str(k): p for k, p in s.probs.items()},
        "blocks": {_key_str(k): state_to_json(b) for k, b in s.blocks.items()},
    }


def cqstate_from_json(obj):
    try:
        cl = [c["label"] for c in obj["classical"]]
        cards = [int(c["card"]) for c in obj["classical"]]
        probs = {_key_parse(k): float(v) for k, v in obj["probs"].items()}
        blocks = {_key_parse(k): state_from_json(v) for k, v in obj["blocks"].items()}
    except (KeyError, TypeError, AttributeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"cqstate: malformed ({e})") from e
    missing = [k for k, p in probs.items() if p > 0 and k not in blocks]
    if missing:
        raise ValidationError(f"cqstate: no block for symbols {missing[0]}")
    if not blocks:
        raise ValidationError("cqstate: no blocks")
    b0 = next(iter(blocks.values()))
    return CQState(tuple(cl), tuple(cards), probs, blocks, b0.dims, b0.labels)


def channel_to_json(ch):
    return {"in_dim": ch.in_dim, "out_dims": list(ch.out_dims),
            "kraus": [[[[float(z.real), float(z.imag)] for z in row] for row in k]
                      for k in ch.kraus_ops]}


def channel_from_json(obj):
    try:
        ops = tuple(_rect_from_json(k, "channel.kraus") for k in obj["kraus"])
        return KrausChannel(ops, int(obj["in_dim"]), tuple(int(d) for d in obj["out_dims"]))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"channel: malformed ({e})") from e


def model_to_json(model):
    return {
        "p_uv": model.p_uv.tolist(),
        "p_x_given_v": model.p_x_given_v.tolist(),
        "modulator": {str(x): state_to_json(m) for x, m in enumerate(model.modulator)},
        "channel": channel_to_json(model.channel),
    }


def model_from_json(obj):
    try:
        mod = obj["modulator"]
        if isinstance(mod, dict):
            mods = [state_from_json(mod[str(x)]) for x in range(len(mod))]
        else:
            mods = [state_from_json(m) for m in mod]
        return BroadcastChannelModel(np.array(obj["p_uv"], dtype=float),
                                     np.array(obj["p_x_given_v"], dtype=float),
                                     tuple(mods), channel_from_json(obj["channel"]))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"model: malformed ({e})") from e


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from e


def load_state(path):
    """Load either a state.json or a cqstate.json file."""
    obj = load_json(path)
    if isinstance(obj, dict) and "classical" in obj:
        return cqstate_from_json(obj)
    return state_from_json(obj)
