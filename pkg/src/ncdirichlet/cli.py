"""Command-line front end: ``ncd gen | verify | triangle | sweep``.

Exit codes: 0 success, 1 a check failed, 2 invalid generator parameters,
3 unreadable or malformed instance, 4 inconsistent instance or triangle.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .constructions import (CUSTOM_KINDS, custom_instance, reim_instance, thm51_instance,
                            thm52_instance)
from .errors import DomainError, NCDError
from .forms import (dirichlet_check, is_real_positive, real_positivity_margin,
                    sample_hermitian, sector_constant)
from .semigroups import (ALPHA_GRID, BETA_GRID, T_GRID, adjoint_superop, approx_form,
                         cp_check, lp_extension_check, resolvent, resolvent_sector_check,
                         semigroup, submarkov_check, triangle)
from .serialization import (REPORT_SCHEMA, FormatError, dumps, instance_from_json,
                            instance_to_json, load_json, write_json_atomic)
from .verdict import FAIL, Verdict, combine

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_FORMAT, EXIT_INCONSISTENT = 0, 1, 2, 3, 4
CHECKS = ("dirichlet", "submarkov", "cp", "lp", "sector")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NCD_THREADS", "1")))
    except ValueError:
        return 1


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _emit(doc: dict, out: str | None):
    doc = {"schema": REPORT_SCHEMA, "timestamp": _timestamp(), **doc}
    if out:
        write_json_atomic(out, doc)
    else:
        sys.stdout.write(dumps(doc))


def _load_instance(path: str):
    return instance_from_json(load_json(path))


def _grids(args) -> dict:
    return {"t": list(args.t_grid), "alpha": list(args.alpha_grid), "beta": list(args.beta_grid)}


# -- gen ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    blocks = args.blocks
    try:
        if args.family == "thm51":
            inst = thm51_instance(blocks, args.nderiv, args.seed)
        elif args.family == "thm52":
            inst = thm52_instance(blocks, args.nderiv, args.seed, args.coercivity)
        elif args.family == "reim":
            inst = reim_instance(blocks, args.seed)
        else:
            inst = custom_instance(args.kind, blocks, args.seed)
    except DomainError as exc:
        print(f"ncd gen: {exc}", file=sys.stderr)
        if exc.witness is not None:
            print(f"witness: {exc.witness!r}", file=sys.stderr)
        return EXIT_SPEC
    prov = {"tool": "ncd", "version": __version__, "family": args.family, "seed": args.seed,
            "blocks": list(blocks), "nderiv": args.nderiv}
    if args.family == "custom-L":
        prov["kind"] = args.kind
    if args.family == "thm52":
        prov["coercivity"] = args.coercivity
    doc = instance_to_json(inst, prov)
    if args.out:
        write_json_atomic(args.out, doc)
    else:
        sys.stdout.write(dumps(doc))
    return EXIT_OK


# -- verify --------------------------------------------------------------------------

def _check_dirichlet(inst, args) -> Verdict:
    full = dirichlet_check(inst.form, args.samples, args.seed, "full")
    half = dirichlet_check(inst.form, args.samples, args.seed, "half")
    out = combine([full, half], "dirichlet")
    out.metadata.update({"full": full.to_json(), "half": half.to_json()})
    return out


def _safe(label, fn) -> Verdict:
    try:
        v = fn()
    except DomainError as exc:
        return Verdict(FAIL, -np.inf, method=label, metadata={"error": str(exc)})
    v.method = label
    return v


def _check_submarkov(inst, args) -> Verdict:
    L, Ls = inst.generator, adjoint_superop(inst.generator)
    parts = []
    for t in args.t_grid:
        parts.append(_safe(f"T t={t:g}", lambda t=t: submarkov_check(semigroup(L, t), seed=args.seed)))
        parts.append(_safe(f"T* t={t:g}", lambda t=t: submarkov_check(semigroup(Ls, t), seed=args.seed)))
    for a in args.alpha_grid:
        parts.append(_safe(f"aG a={a:g}", lambda a=a: submarkov_check(a * resolvent(L, a), seed=args.seed)))
    out = combine(parts, "submarkov")
    out.metadata["parts"] = {p.method: p.to_json() for p in parts}
    return out


def _check_cp(inst, args) -> Verdict:
    parts = [_safe(f"T t={t:g}", lambda t=t: cp_check(semigroup(inst.generator, t)))
             for t in args.t_grid]
    out = combine(parts, "cp")
    out.metadata["parts"] = {p.method: p.to_json() for p in parts}
    return out


def _check_lp(inst, args) -> Verdict:
    parts = [_safe(f"T t={t:g}", lambda t=t: lp_extension_check(
        semigroup(inst.generator, t), n_samples=max(10, args.samples // 4), seed=args.seed))
        for t in args.t_grid]
    out = combine(parts, "lp")
    out.metadata["parts"] = {p.method: p.to_json() for p in parts}
    return out


def _check_sector(inst, args) -> Verdict:
    E, L = inst.form, inst.generator
    if not is_real_positive(E):
        return Verdict(FAIL, real_positivity_margin(E), method="sector",
                       metadata={"reason": "form is not real-positive"})
    K = sector_constant(E)
    meta = {"sector_constant": K}
    margin = 0.0
    if inst.coefficient_role == "C" and inst.derivations:
        bound = len(inst.derivations) * inst.coefficients.sup_norm() + 1.0
        meta["sector_bound"] = bound
        margin = bound + 1e-9 - K
        if margin < 0:
            return Verdict(FAIL, margin, method="sector", metadata=meta)
    res = resolvent_sector_check(L, K, 1.0, args.samples, args.seed)
    meta["resolvent_sector"] = res.to_json()
    # approximating forms: |E^beta - E| <= ||L||^2 ||x|| ||y|| / (beta - ||L||)
    h = sample_hermitian(E.algebra, 2, args.seed)
    x, y = E.algebra.from_hcoords(h[0]), E.algebra.from_hcoords(h[1])
    exact = E(x, y)
    nl, nxy = L.norm, np.linalg.norm(h[0]) * np.linalg.norm(h[1])
    errs, bounds = [], []
    for b in args.beta_grid:
        errs.append(abs(approx_form(L, b, x, y) - exact))
        bounds.append(nl ** 2 * nxy / (b - nl) if b > nl else np.inf)
    meta["approx_form_errors"] = errs
    meta["approx_form_bounds"] = bounds
    status = res.status
    if any(e > bd * (1 + 1e-6) + 1e-12 for e, bd in zip(errs, bounds)):
        status = FAIL
        meta["reason"] = "approximating forms do not converge at the expected rate"
    return Verdict(status, min(margin, res.margin), None, res.samples, args.seed, "sector", meta)


_CHECK_FNS = {"dirichlet": _check_dirichlet, "submarkov": _check_submarkov, "cp": _check_cp,
              "lp": _check_lp, "sector": _check_sector}


def cmd_verify(args) -> int:
    try:
        inst = _load_instance(args.instance)
    except (FormatError, NCDError) as exc:
        print(f"ncd verify: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    names = CHECKS if args.check == "all" else (args.check,)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {n: pool.submit(_CHECK_FNS[n], inst, args) for n in names}
        results = {n: f.result() for n, f in futures.items()}
    ok = all(v.passed for v in results.values())
    _emit({"instance": inst.label, "check": args.check, "status": "PASS" if ok else "FAIL",
           "results": {n: v.to_json() for n, v in results.items()},
           "margins": {n: v.margin for n, v in results.items()},
           "grids": _grids(args), "seeds": {"seed": args.seed, "samples": args.samples}},
          args.out)
    return EXIT_OK if ok else EXIT_FAIL


# -- triangle ------------------------------------------------------------------------

def _triangle_doc(inst, args) -> dict:
    plain = triangle(inst.generator, False, args.t_grid, args.alpha_grid, args.samples, args.seed)
    both = triangle(inst.generator, True, args.t_grid, args.alpha_grid, args.samples, args.seed)

    def summary(r):
        return {"consistency": r["consistency"], "real_positive": r["real_positive"],
                "legs": {k: v.to_json() for k, v in r["legs"].items()}}
    return {"plain": summary(plain), "adjoint": summary(both)}


def cmd_triangle(args) -> int:
    try:
        inst = _load_instance(args.instance)
    except (FormatError, NCDError) as exc:
        print(f"ncd triangle: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    gap = float(np.max(np.abs(inst.generator.matrix + inst.form.matrix), initial=0.0))
    if gap > 1e-10 * (1.0 + inst.form.norm):
        print(f"ncd triangle: generator differs from minus the form matrix by {gap:.3e}",
              file=sys.stderr)
        _emit({"instance": inst.label, "check": "triangle", "status": "INCONSISTENT",
               "error": "generator != -form", "gap": gap, "grids": _grids(args),
               "seeds": {"seed": args.seed, "samples": args.samples}}, args.out)
        return EXIT_INCONSISTENT
    doc = _triangle_doc(inst, args)
    bad = any(doc[v]["consistency"] == "INCONSISTENT" for v in ("plain", "adjoint"))
    _emit({"instance": inst.label, "check": "triangle",
           "status": "INCONSISTENT" if bad else "CONSISTENT", "triangles": doc,
           "grids": _grids(args), "seeds": {"seed": args.seed, "samples": args.samples}},
          args.out)
    return EXIT_INCONSISTENT if bad else EXIT_OK


# -- sweep ----------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    def one(seed):
        try:
            if args.family == "thm51":
                inst = thm51_instance(args.blocks, args.nderiv, seed)
            elif args.family == "thm52":
                inst = thm52_instance(args.blocks, args.nderiv, seed, args.coercivity)
            elif args.family == "reim":
                inst = reim_instance(args.blocks, seed)
            else:
                inst = custom_instance(args.kind, args.blocks, seed)
        except DomainError as exc:
            return seed, {"skipped": str(exc)}
        doc = _triangle_doc(inst, args)
        return seed, {v: {"consistency": doc[v]["consistency"],
                          "legs": {k: leg["status"] for k, leg in doc[v]["legs"].items()}}
                      for v in ("plain", "adjoint")}

    seeds = [args.seed + i for i in range(args.count)]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = dict(pool.map(one, seeds))
    bad = [s for s, r in rows.items()
           if any(r.get(v, {}).get("consistency") == "INCONSISTENT" for v in ("plain", "adjoint"))]
    _emit({"instance": f"sweep-{args.family}", "check": "triangle-sweep",
           "status": "INCONSISTENT" if bad else "CONSISTENT",
           "instances": {str(s): r for s, r in rows.items()}, "inconsistent_seeds": bad,
           "grids": _grids(args), "seeds": {"seed": args.seed, "count": args.count,
                                            "samples": args.samples}}, args.out)
    return EXIT_INCONSISTENT if bad else EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--t-grid", type=_floats, default=T_GRID)
    p.add_argument("--alpha-grid", type=_floats, default=ALPHA_GRID)
    p.add_argument("--beta-grid", type=_floats, default=BETA_GRID)
    p.add_argument("--out", help="write the JSON report here (default: stdout)")


def _family_args(p):
    p.add_argument("--family", choices=("thm51", "thm52", "reim", "custom-L"), default="thm51")
    p.add_argument("--blocks", type=_ints, default=(2,), help="block dimensions, e.g. 2,3")
    p.add_argument("--nderiv", type=int, default=2)
    p.add_argument("--coercivity", type=float, default=1e-8,
                   help="required smallest eigenvalue of the symmetric coefficient part")
    p.add_argument("--kind", choices=CUSTOM_KINDS, default="anti-dissipative",
                   help="generator kind for --family custom-L")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance file")
    _family_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="run checks on an instance")
    p.add_argument("instance")
    p.add_argument("--check", choices=CHECKS + ("all",), default="all")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("triangle", help="run the four equivalent legs and compare them")
    p.add_argument("instance")
    _common(p)
    p.set_defaults(func=cmd_triangle)

    p = sub.add_parser("sweep", help="generate seeded instances and run triangles on each")
    _family_args(p)
    p.add_argument("--count", type=int, default=10)
    _common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("gen", "sweep") and any(b < 1 for b in args.blocks):
        print("ncd: block dimensions must be positive", file=sys.stderr)
        return EXIT_SPEC
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"ncd: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
