"""Command-line front end.

Exit codes: 0 success, 1 failed verification trial, 2 invalid input,
3 solver failure, 4 dimension cap exceeded. Results go to stdout as JSON;
diagnostics go to stderr. Global settings resolve as flag > environment
(QBC_TOL, QBC_DIM_CAP, QBC_SEED) > default.
"""
import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import codingsim, divergences, linalg, oneshot, propcheck, regions, splitlemmas
from .errors import DimensionCapExceeded, QbcError, SolverError, ValidationError
from .states import CQState, load_json, load_state, model_from_json

DEFAULTS = {"tol": 1e-5, "dim_cap": 2 ** 14, "seed": 0}
ENV = {"tol": ("QBC_TOL", float), "dim_cap": ("QBC_DIM_CAP", int), "seed": ("QBC_SEED", int)}


def resolve(args):
    """Fill global settings: explicit flag, then environment, then default."""
    if not hasattr(args, "no_meta"):
        args.no_meta = False
    for key, (var, cast) in ENV.items():
        if getattr(args, key, None) is None:
            raw = os.environ.get(var)
            if raw is not None:
                try:
                    setattr(args, key, cast(raw))
                except ValueError:
                    raise ValidationError(f"{var}={raw!r} is not a valid {cast.__name__}") from None
            else:
                setattr(args, key, DEFAULTS[key])
    return args


def _num(x):
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, np.ndarray):
        return _num(x.tolist())
    return x


def emit(obj, args, t0=None):
    if t0 is not None and not args.no_meta:
        obj["runtime_ms"] = round(1000 * (time.perf_counter() - t0), 3)
    sys.stdout.write(json.dumps(_num(obj), sort_keys=True) + "\n")


def _labels(s):
    return [x for x in s.split(",") if x] if s else []


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ValidationError(f"--{n.replace('_', '-')} is required")


# ----------------------------------------------------------------- entropy

def cmd_entropy(args):
    t0 = time.perf_counter()
    kind = args.kind
    out = {"quantity": kind}
    width = args.tol
    if kind in ("dh", "dmax", "dmax-smooth", "rel"):
        _require(args, "rho", "sigma")
        rho, sigma = load_state(args.rho), load_state(args.sigma)
        if kind == "dh":
            _require(args, "eps")
            value, test = oneshot.d_hypo(rho, sigma, args.eps)
            out["value"] = value
            out["certificate_summary"] = {"type1": test.type1, "type2": test.type2,
                                          "threshold": test.threshold, "boundary_mix": test.boundary_mix,
                                          "lagrangian_gap": test.gap, "fallback": test.degenerate}
        elif kind == "dmax":
            out["value"] = oneshot.d_max(rho, sigma)
            out["certificate_summary"] = {}
        elif kind == "dmax-smooth":
            _require(args, "eps")
            cert = oneshot.d_max_smooth(rho, sigma, args.eps, width)
            out["value"] = cert.lam
            out["certificate_summary"] = {"distance": cert.distance, "bracket": list(cert.bracket),
                                          "feasibility_residual": cert.feasibility_residual,
                                          "solves": cert.solves}
        else:
            a = rho.expand() if isinstance(rho, CQState) else rho
            b = sigma.expand() if isinstance(sigma, CQState) else sigma
            out["value"] = divergences.relative_entropy(a, b)
            out["certificate_summary"] = {"support_violation": divergences.support_violation(a, b)}
    else:
        _require(args, "state", "a", "b")
        st = load_state(args.state)
        a, b, x = _labels(args.a), _labels(args.b), _labels(args.given)
        if kind == "mi":
            out["value"] = divergences.mutual_information(st, a, b)
        elif kind == "cmi":
            out["value"] = divergences.conditional_mutual_information(st, a, b, x)
        else:
            _require(args, "eps")
            est = (oneshot.i_max_tilde_cond(st, a, b, x, args.eps, width) if x
                   else oneshot.i_max_tilde(st, a, b, args.eps, width))
            out["bracket"] = {"lower": est.lower, "heuristic": est.heuristic, "upper": est.upper}
            out["certificate_summary"] = {"witness_distance": est.witness.distance,
                                          "witness_residual": est.witness.feasibility_residual}
        out.setdefault("certificate_summary", {})
    emit(out, args, t0)
    return 0


# ------------------------------------------------------------------ verify

def _dims(args, default):
    if not args.dims:
        return default
    try:
        return [int(d) for d in args.dims.split(",")]
    except ValueError:
        raise ValidationError(f"--dims must be comma-separated integers, got {args.dims!r}") from None


def _trial(kind, rng, i, args):
    if kind == "hayashi-nagaoka":
        ds = _dims(args, [2, 4, 8])
        S, T, c = splitlemmas.random_hn_instance(ds[i % len(ds)], rng)
        return splitlemmas.verify_hayashi_nagaoka(S, T, c), {"S": S, "T": T, "c": c}
    if kind == "decomposition":
        d = _dims(args, [2])[i % len(_dims(args, [2]))]
        comps = [linalg.random_density(d, rng) for _ in range(3)]
        p = rng.dirichlet(np.ones(3))
        theta = linalg.random_density(d, rng)
        return splitlemmas.verify_decomposition_identity(comps, p, theta), \
            {"states": comps, "p": p, "theta": theta}
    if kind == "pinsker":
        ds = _dims(args, [2, 3])
        return propcheck.pinsker_trial(rng, ds[i % len(ds)]), {}
    if kind == "purified-props":
        ds = _dims(args, [2, 3])
        return propcheck.purified_props_trial(rng, ds[i % len(ds)]), {}
    if kind == "convex-split":
        ns = [int(v) for v in args.n.split(",")] if args.n else list(range(2, 9))
        d = _dims(args, [2])[0]
        inst = splitlemmas.random_convex_split_instance(rng, ns[i % len(ns)], d, d, d, args.dim_cap)
        return splitlemmas.verify_convex_split(inst), _inst_dump(inst)
    if kind == "convex-split-smooth":
        inst = splitlemmas.engineered_instance(rng, args.delta, cap=args.dim_cap)
        return splitlemmas.verify_convex_split_smooth(inst, args.eps, args.delta, width=args.tol), \
            _inst_dump(inst)
    raise ValidationError(f"unknown verifier {kind!r}")


def _inst_dump(inst):
    return {"p_x": inst.p_x, "rho_xab": inst.rho_xab, "sigma_xb": inst.sigma_xb, "n": inst.n}


def _jsonable(x):
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return [[[float(v.real), float(v.imag)] for v in row] for row in np.atleast_2d(x)]
        return x.tolist()
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return _num(x)


def cmd_verify(args):
    t0 = time.perf_counter()
    if args.trials < 1:
        raise ValidationError("--trials must be at least 1")
    rng = np.random.default_rng(args.seed)
    passed, worst, failures = 0, math.inf, []
    for i in range(args.trials):
        rep, inst = _trial(args.kind, rng, i, args)
        worst = min(worst, rep.slack)
        if rep.passed:
            passed += 1
        else:
            failures.append({"trial": i, "seed": args.seed, "lhs": rep.lhs, "bound": rep.bound,
                             "slack": rep.slack, "digest": rep.digest, "instance": _jsonable(inst)})
    out = {"verifier": args.kind, "trials": args.trials, "passed": passed, "worst_slack": worst}
    code = 0
    if failures:
        with open(args.dump, "w") as fh:
            json.dump(failures, fh)
        out["failure_dump"] = args.dump
        code = 1
        print(f"{len(failures)} trial(s) failed; reproducer written to {args.dump}", file=sys.stderr)
    emit(out, args, t0)
    return code


# ---------------------------------------------------------------- simulate

def cmd_simulate(args):
    t0 = time.perf_counter()
    cfg_obj = load_json(args.config)
    cfg = codingsim.CodebookConfig.from_json(cfg_obj)
    cfg.cap = args.dim_cap
    rep = codingsim.simulate(cfg)
    out = rep.to_json()
    out["violations"] = rep.violations()
    emit(out, args, t0)
    return 0


# ------------------------------------------------------------------ region

def _budget(args):
    return regions.EpsilonBudget(args.eps1, args.eps2, args.delta1, args.delta2, args.delta3,
                                 args.eta)


def _quads(args):
    out = []
    for q in args.quad or []:
        try:
            vals = [float(v) for v in q.split(",")]
        except ValueError:
            raise ValidationError(f"--quad expects R0,R1,Rs,Rd, got {q!r}") from None
        if len(vals) != 4:
            raise ValidationError(f"--quad expects four rates, got {q!r}")
        out.append(regions.RateQuadruple(*vals))
    return out


def _grid(spec):
    if os.path.exists(spec):
        obj = load_json(spec)
        vals = obj["grid"] if isinstance(obj, dict) else obj
        return [float(v) for v in vals]
    parts = spec.split(":")
    if len(parts) == 3:
        return list(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
    return [float(v) for v in spec.split(",") if v]


def cmd_region(args):
    t0 = time.perf_counter()
    which = args.kind
    budget = _budget(args) if which in ("achievability", "cq") else None
    eps = args.eps
    if which == "converse" and eps is None:
        raise ValidationError("--eps is required for the converse region")
    if args.scan is not None:
        if which == "cq":
            raise ValidationError("scans are available for the four rate regions")
        rows = regions.scan(args.family, _grid(args.scan), which, budget, eps, args.tol)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                regions.rows_to_csv(rows, which, fh)
        emit({"region": which, "family": args.family, "rows": rows, "csv": args.out}, args, t0)
        return 0
    _require(args, "model")
    model = model_from_json(load_json(args.model))
    if which == "cq":
        res = regions.cq_specialization(model, budget, eps, args.tol)
        emit({"region": "cq", "pairs": res}, args, t0)
        return 0
    rep = regions.evaluate(model, which, budget, eps, args.tol)
    out = {"region": which, "quantities": rep.quantities,
           "constraints": [{"label": c.label, "coeffs": c.coeffs, "sense": c.sense, "rhs": c.rhs}
                           for c in rep.constraints],
           "checks": rep.checks, "certified": rep.certified}
    q = _quads(args)
    if q:
        out["membership"] = rep.verdicts(q, args.optimistic)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            row = {"param": math.nan, "error": ""}
            row.update(rep.row())
            regions.rows_to_csv([row], which, fh)
    emit(out, args, t0)
    return 0


# ------------------------------------------------------------------ parser

def build_parser():
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="bisection width in bits (env QBC_TOL)")
    common.add_argument("--dim-cap", type=int, default=argparse.SUPPRESS,
                        help="dimension cap (env QBC_DIM_CAP)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (env QBC_SEED)")
    common.add_argument("--no-meta", action="store_true", default=argparse.SUPPRESS,
                        help="omit runtime fields from JSON")
    p = argparse.ArgumentParser(prog="qbcast", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("entropy", parents=[common], help="one-shot and von Neumann quantities")
    e.add_argument("kind", choices=["dh", "dmax", "dmax-smooth", "imax-tilde", "rel", "mi", "cmi"])
    e.add_argument("--rho")
    e.add_argument("--sigma")
    e.add_argument("--state")
    e.add_argument("--a")
    e.add_argument("--b")
    e.add_argument("--given")
    e.add_argument("--eps", type=float)
    e.set_defaults(func=cmd_entropy)

    v = sub.add_parser("verify", parents=[common], help="randomized verification of inequalities")
    v.add_argument("kind", choices=["convex-split", "convex-split-smooth", "hayashi-nagaoka",
                                    "decomposition", "pinsker", "purified-props"])
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--dims")
    v.add_argument("--n", help="comma-separated copy counts for convex-split")
    v.add_argument("--eps", type=float, default=0.1)
    v.add_argument("--delta", type=float, default=0.5)
    v.add_argument("--dump", default="qbcast-failures.json")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", parents=[common], help="exact coding simulation")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("region", parents=[common], help="rate-region evaluation")
    r.add_argument("kind", choices=["achievability", "converse", "asymptotic", "classical", "cq"])
    r.add_argument("--model")
    r.add_argument("--family", default="depolarizing", choices=sorted(regions.FAMILIES))
    r.add_argument("--scan", help="grid: JSON file, start:stop:num, or comma list")
    r.add_argument("--out")
    r.add_argument("--quad", action="append", help="R0,R1,Rs,Rd (repeatable)")
    r.add_argument("--optimistic", action="store_true",
                   help="use lower bracket ends (not certified)")
    r.add_argument("--eps", type=float)
    r.add_argument("--eps1", type=float, default=0.05)
    r.add_argument("--eps2", type=float, default=0.2)
    r.add_argument("--delta1", type=float, default=0.04)
    r.add_argument("--delta2", type=float, default=0.04)
    r.add_argument("--delta3", type=float, default=0.04)
    r.add_argument("--eta", type=float, default=0.039)
    r.set_defaults(func=cmd_region)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve(args)
        return args.func(args)
    except DimensionCapExceeded as e:
        print(f"dimension cap: {e}", file=sys.stderr)
        return 4
    except ValidationError as e:
        print(f"invalid input: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except SolverError as e:
        print(f"solver failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except QbcError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except (OSError, KeyError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
