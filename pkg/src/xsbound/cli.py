"""Command-line front end: norm, block, prove, verify, suite.

Exit codes: 0 success (or Converges), 1 failed check or verdict, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import blocks, harness, lattice, norms, prover
from .dyadic import Verdict

OK, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _rational(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {s!r}")


def _signs(s: str) -> tuple:
    if set(s) <= {"+", "-"} and len(s) == 3:
        return tuple(1 if c == "+" else -1 for c in s)
    try:
        out = tuple(int(x) for x in s.replace(",", " ").split())
    except ValueError:
        out = ()
    if len(out) != 3 or set(out) - {1, -1}:
        raise argparse.ArgumentTypeError("signs are three of +/- such as ++- or 1,1,-1")
    return out


def _emit(obj, as_json: bool, text: str):
    print(json.dumps(obj, sort_keys=True, indent=1) if as_json else text)


# norm


def _norm_multiplier(args):
    if args.input:
        with open(args.input, "rb") as fh:
            m = lattice.loads(fh.read())
        if not isinstance(m, lattice.TupleMultiplier):
            raise UsageError("input container holds a grid function, not a multiplier")
        return m
    if args.points is None:
        raise UsageError("--points is required without --input")
    kind = args.group
    if kind == "cycle":
        g = lattice.cycle(args.points, args.dim)
    elif kind == "torus":
        g = lattice.torus_grid(args.points, args.spacing, args.dim)
    else:
        g = lattice.real_grid(args.points, args.spacing, args.dim)
    if args.multiplier == "constant":
        return lattice.TupleMultiplier.from_rule(
            g, args.k, lambda xs: np.ones(len(xs[0]), dtype=complex))
    rng = np.random.default_rng(args.seed)
    shape = (g.size,) * (args.k - 1)
    return lattice.TupleMultiplier.from_dense(g, args.k, rng.random(shape))


def cmd_norm(args) -> int:
    m = _norm_multiplier(args)
    rec = {"group": m.group.kind, "dim": m.group.dim, "points": m.group.points,
           "spacing": str(m.group.spacing), "k": m.k, "method": args.method}
    if args.method == "cs":
        rec["upper"] = norms.cs_upper_min(m)
        text = f"cs_upper = {rec['upper']:.12g}"
    elif args.method == "exact-k2":
        if m.k != 2:
            raise UsageError("exact-k2 needs k = 2")
        rec["value"] = norms.k2_exact(m)
        text = f"k2_exact = {rec['value']:.12g}"
    else:
        cfg = norms.AltMaxConfig(restarts=args.restarts, iterations=args.iters, tol=args.tol,
                                 seed=args.seed)
        est = norms.estimate(m, cfg)
        rec.update(lower=est.lower, upper=est.upper)
        text = f"alt_max lower = {est.lower:.12g}   cs upper = {est.upper:.12g}"
    _emit(rec, args.json, text)
    return OK


# block


DEFAULT_SIGNS = {"kdv-r": (1, 1, 1), "kdv-t": (1, 1, 1), "wave": (1, 1, -1),
                 "schro-ppp": (1, 1, 1), "schro-ppm": (1, 1, -1)}


def cmd_block(args) -> int:
    setting = "periodic" if args.family == "kdv-t" else "nonperiodic"
    signs = args.signs if args.signs is not None else DEFAULT_SIGNS[args.family]
    try:
        p = blocks.BlockParams((args.N1, args.N2, args.N3), (args.L1, args.L2, args.L3), args.H,
                               signs, args.dim, setting, args.eps)
    except ValueError as e:
        raise UsageError(str(e))
    b = blocks.block_bound(args.family, p)
    rec = dict(b.to_record(), params=p.to_record(), family=args.family)
    _emit(rec, args.json, f"{b.case_label}: {b.value:.12g}")
    return OK


# prove


def cmd_prove(args) -> int:
    params = {}
    for kv in args.param or []:
        if "=" not in kv:
            raise UsageError(f"--param needs key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        try:
            params[k.strip()] = int(v) if k.strip() == "d" else Fraction(v.strip())
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad rational in --param {kv!r}")
    if bool(args.builtin) == bool(args.spec):
        raise UsageError("give exactly one of --builtin or --spec")
    try:
        if args.builtin:
            rep = prover.prove(args.builtin, params)
        else:
            with open(args.spec) as fh:
                spec = prover.parse_spec(fh.read())
            rep = prover.run_spec(spec, spec.label or "custom", params)
    except prover.AveragingRefused as e:
        print(str(e), file=sys.stderr)
        return FAIL
    except ValueError as e:
        raise UsageError(str(e))
    if args.json:
        print(rep.to_json(indent=1))
    else:
        lines = [f"{rep.name}: {rep.overall.name}"]
        for b in rep.branches:
            worst = max((Verdict[c["verdict"]] for c in b["cases"]), default=Verdict.Converges)
            lines.append(f"  {b['branch_label']}: {len(b['cases'])} problems, worst {worst.name}")
        for step in rep.certificate_chain:
            lines.append(f"  [{'ok' if step['holds'] else 'FAILED'}] {step['step']}")
        print("\n".join(lines))
    return OK if rep.overall == Verdict.Converges else FAIL


# verify


def _resolution(s: str) -> blocks.BlockGrid:
    try:
        pts, h = s.split(":")
        return blocks.BlockGrid(int(pts), Fraction(h))
    except ValueError:
        raise argparse.ArgumentTypeError("resolution is POINTS:SPACING, e.g. 64:1/4")


def cmd_verify(args) -> int:
    if args.grid_file:
        with open(args.grid_file) as fh:
            recs = json.load(fh)
        try:
            plist = [harness.params_from_record(r) for r in recs]
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"bad grid file: {e}")
    elif args.family == "kdv-r":
        plist = [p for sw in harness.KDV_SWEEPS for p in sw.params()]
    else:
        raise UsageError("--grid-file is required for families other than kdv-r")
    grid = args.resolution
    if grid is None:
        grid = harness.KDV_GRID if all(p.dim == 1 for p in plist) else harness.PLANE_GRID
    cfg = norms.AltMaxConfig(restarts=4, iterations=60, seed=args.seed)
    rows = list(harness.run_grid_verification(args.family, plist, grid, cfg))
    fmt = "csv" if args.out and args.out.endswith(".csv") else "json"
    text = harness.emit_report(rows, fmt, args.out, seed=args.seed, timing=not args.no_timing)
    if not args.out:
        print(text)
    bad = [r for r in rows if r.check()]
    return FAIL if bad else OK


# suite


def cmd_suite(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    res = harness.run_property_suite(args.seed, args.trials)
    for name, c in res.counts.items():
        print(f"{name:20s} passed {c['passed']:4d} failed {c['failed']:4d}")
    for f in res.failures:
        print("FAILED " + json.dumps(f, sort_keys=True, default=str))
    return OK if res.ok else FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xsbound", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    n = sub.add_parser("norm", help="estimate a multiplier norm")
    n.add_argument("--input", help="serialized multiplier container")
    n.add_argument("--group", choices=["cycle", "torus", "real"], default="cycle")
    n.add_argument("--dim", type=int, default=1)
    n.add_argument("--points", type=int)
    n.add_argument("--spacing", type=_rational, default=Fraction(1))
    n.add_argument("--k", type=int, default=3)
    n.add_argument("--multiplier", choices=["constant", "random"], default="constant")
    n.add_argument("--method", choices=["altmax", "cs", "exact-k2"], default="altmax")
    n.add_argument("--restarts", type=int, default=8)
    n.add_argument("--iters", type=int, default=200)
    n.add_argument("--tol", type=float, default=1e-10)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--json", action="store_true")
    n.set_defaults(fn=cmd_norm)

    b = sub.add_parser("block", help="closed-form block bound")
    b.add_argument("--family", choices=list(blocks.FAMILIES), required=True)
    b.add_argument("--dim", type=int, default=1)
    for s in ("N1", "N2", "N3", "L1", "L2", "L3"):
        b.add_argument(f"--{s}", type=_rational, required=True)
    b.add_argument("--H", type=_rational, required=True)
    b.add_argument("--signs", type=_signs)
    b.add_argument("--eps", type=_rational, default=blocks.DEFAULT_EPS)
    b.add_argument("--json", action="store_true")
    b.set_defaults(fn=cmd_block)

    p = sub.add_parser("prove", help="run a built-in or a spec file through the prover")
    p.add_argument("--builtin", choices=sorted(prover.BUILTINS))
    p.add_argument("--spec")
    p.add_argument("--param", action="append", metavar="KEY=RATIONAL")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_prove)

    v = sub.add_parser("verify", help="numeric block verification over a parameter grid")
    v.add_argument("--family", choices=list(blocks.FAMILIES), default="kdv-r")
    v.add_argument("--grid-file", help="JSON list of {N, L, H, dim, signs} records")
    v.add_argument("--resolution", type=_resolution, help="POINTS:SPACING")
    v.add_argument("--out", help="report path (.json or .csv)")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")
    v.set_defaults(fn=cmd_verify)

    s = sub.add_parser("suite", help="randomized property suite")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--trials", type=int, default=200)
    s.set_defaults(fn=cmd_suite)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else OK
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
