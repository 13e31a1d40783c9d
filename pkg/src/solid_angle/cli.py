"""Command-line front end.

Input is one JSON document::

    {"dim": 3, "cones": [{"name": "c1", "generators": [[1, 0, 0], ["1/2", 1, 0], ...],
                          "method": "decomp1"}]}

Entries are JSON numbers, decimal strings or exact rationals "p/q" (converted
to float after parsing).  Exit codes: 0 on success, 2 for unreadable input or
bad flags, 3 when a cone fails numerically.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .cones import Cone, associated_matrix, triangulate
from .decompose import check_pieces, decomp1, decomp2, span_reduction
from .errors import SolidAngleError
from .linalg import SymTridiag, is_positive_definite, smallest_eigenvalue_dense, tridiag_lambda_min
from .measure import DEFAULT_METHOD, METHODS, MeasureConfig, measure
from .series import boundary_point, on_convergence_boundary, truncation_decay_probe

log = logging.getLogger("solid_angle")

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3
DECOMPOSE_METHODS = ("decomp1", "decomp2", "decomp2-tridiag")


class InputError(Exception):
    """Malformed cone file or flag value."""


@dataclass(frozen=True)
class ConeSpec:
    name: str
    generators: np.ndarray
    method: Optional[str] = None


def parse_scalar(x) -> float:
    """A JSON number, a decimal string or an exact rational "p/q"."""
    if isinstance(x, bool):
        raise InputError(f"boolean {x!r} is not a coordinate")
    if isinstance(x, (int, float)):
        v = float(x)
    elif isinstance(x, str):
        try:
            v = float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"cannot parse {x!r} as a number: {exc}") from None
    else:
        raise InputError(f"cannot parse {x!r} as a number")
    if not math.isfinite(v):
        raise InputError(f"coordinate {x!r} is not finite")
    return v


def parse_cone_file(doc) -> tuple:
    """Validate a decoded document; returns (dim, [ConeSpec, ...])."""
    if not isinstance(doc, dict):
        raise InputError("top level must be an object with 'dim' and 'cones'")
    dim = doc.get("dim")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise InputError("'dim' must be a positive integer")
    cones = doc.get("cones")
    if not isinstance(cones, list) or not cones:
        raise InputError("'cones' must be a non-empty list")
    out, seen = [], set()
    for k, c in enumerate(cones):
        if not isinstance(c, dict):
            raise InputError(f"cone #{k} must be an object")
        name = c.get("name", f"cone{k}")
        if not isinstance(name, str) or not name:
            raise InputError(f"cone #{k}: name must be a non-empty string")
        if name in seen:
            raise InputError(f"duplicate cone name {name!r}")
        seen.add(name)
        gens = c.get("generators")
        if not isinstance(gens, list) or not gens:
            raise InputError(f"cone {name!r}: 'generators' must be a non-empty list")
        rows = []
        for g in gens:
            if not isinstance(g, list) or len(g) != dim:
                raise InputError(f"cone {name!r}: every generator needs {dim} entries")
            rows.append([parse_scalar(x) for x in g])
        method = c.get("method")
        if method is not None and method not in METHODS:
            raise InputError(f"cone {name!r}: unknown method {method!r}")
        out.append(ConeSpec(name, np.array(rows, dtype=float), method))
    return dim, out


def load_cone_file(path: str) -> tuple:
    try:
        if path == "-":
            doc = json.load(sys.stdin)
        else:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    return parse_cone_file(doc)


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, no NaN."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _plain(x):
    """Convert numpy scalars and arrays to JSON-ready Python values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


# -- subcommands -----------------------------------------------------------------------

def _config(args, **extra) -> dict:
    cfg = {"method": args.method, "tol": args.tol, "max_terms": args.max_terms,
           "samples": args.samples, "seed": args.seed, "jobs": args.jobs,
           "span_relative": args.span_relative, "check": args.check}
    cfg.update(extra)
    return cfg


def _measure_one(spec: ConeSpec, args, method: str) -> dict:
    cfg = MeasureConfig(method=method, tol=args.tol, max_terms=args.max_terms,
                        span_relative=args.span_relative, samples=args.samples,
                        seed=args.seed, jobs=1)
    t0 = time.perf_counter()
    r = measure(Cone(spec.generators), cfg)
    row = {"name": spec.name, "value": r.value, "abs_error_estimate": r.abs_error_estimate,
           "method": method, "pieces": r.pieces, "terms_used": r.terms_used,
           "wall_time": time.perf_counter() - t0, "warning": r.warning}
    if method == "mc":
        row["std_error"] = r.details.get("std_error", r.abs_error_estimate)
    return row


def _decompose_one(spec: ConeSpec, args, method: str) -> dict:
    if method not in DECOMPOSE_METHODS:
        raise InputError(f"decompose supports {', '.join(DECOMPOSE_METHODS)}, not {method!r}")
    t0 = time.perf_counter()
    C = Cone(spec.generators)
    L, B, G = span_reduction(C)
    row = {"name": spec.name, "method": method, "lineality_dim": int(L.shape[1]),
           "span_dim": int(L.shape[1] + (0 if B is None else B.shape[1]))}
    pieces, checks = [], {}
    simplices = triangulate(Cone(G)) if B is not None else []
    for S in simplices:
        dec = decomp1(S) if method == "decomp1" else decomp2(S, tridiagonal=method == "decomp2-tridiag")
        for p in dec.pieces:
            rows = np.asarray(p.generators, dtype=float)
            entry = {"sign": p.sign, "form": p.form.value, "generators": rows @ B.T}
            if hasattr(p.cone, "gram"):
                M = associated_matrix(p.cone)
                entry.update(gram=p.cone.gram, lambda_min=smallest_eigenvalue_dense(M),
                             positive_definite=is_positive_definite(M))
            pieces.append(entry)
        if args.check:
            for k, ok in check_pieces(S, dec).items():
                checks[k] = checks.get(k, True) and ok
    row.update(simplices=len(simplices), pieces=pieces, wall_time=time.perf_counter() - t0)
    if args.check:
        row["checks"] = checks
    return row


def _probe_beta(beta: np.ndarray, args) -> dict:
    entry = {"beta": beta}
    if len(beta) == 0:
        entry.update(lambda_min=1.0, boundary_residual=0.0, ratios=[0.0] * (args.shifts + 1))
        return entry
    entry["lambda_min"] = tridiag_lambda_min(SymTridiag.unit(beta))
    entry["boundary_residual"] = abs(on_convergence_boundary(boundary_point(beta)))
    entry["ratios"] = truncation_decay_probe(beta, args.cap, args.shifts, max_terms=args.max_terms)
    return entry


def _probe_one(spec: ConeSpec, args, method: str) -> dict:
    t0 = time.perf_counter()
    row = _decompose_one(spec, argparse.Namespace(check=False), "decomp2-tridiag")
    probes = []
    for p in row["pieces"]:
        if p["form"] != "PD_FULL":
            continue
        probes.append({"sign": p["sign"], **_probe_beta(np.diag(p["gram"], 1).copy(), args)})
    return {"name": spec.name, "pieces": probes, "wall_time": time.perf_counter() - t0}


def _run_cones(specs, args, worker) -> tuple:
    """Apply ``worker`` to every cone (in parallel with --jobs), keeping input order."""

    def one(spec):
        method = spec.method or args.method
        try:
            return worker(spec, args, method), None
        except InputError:
            raise
        except (SolidAngleError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            log.error("cone %s: %s", spec.name, exc)
            return {"name": spec.name, "method": method, "error": str(exc)}, spec.name

    if args.jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, specs))
    else:
        results = [one(s) for s in specs]
    rows = [r for r, _ in results]
    failed = [f for _, f in results if f is not None]
    return rows, failed


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _human_measure(report: dict) -> str:
    lines = [f"# solid-angle {report['version']} {report['command']}"]
    for r in report["cones"]:
        if "error" in r:
            lines.append(f"{r['name']}: FAILED ({r['error']})")
            continue
        flag = "  [clamped]" if r.get("warning") else ""
        lines.append(f"{r['name']}: {_fmt(r['value'])} +/- {r['abs_error_estimate']:.2e}"
                     f"  method={r['method']} pieces={r['pieces']} terms={r['terms_used']}"
                     f" time={r['wall_time']:.3f}s{flag}")
    return "\n".join(lines) + "\n"


def _human_decompose(report: dict) -> str:
    lines = [f"# solid-angle {report['version']} decompose"]
    for r in report["cones"]:
        if "error" in r:
            lines.append(f"{r['name']}: FAILED ({r['error']})")
            continue
        lines.append(f"{r['name']}: {len(r['pieces'])} pieces from {r['simplices']} simplices"
                     f" ({r['method']}, lineality {r['lineality_dim']})")
        for k, p in enumerate(r["pieces"]):
            sign = "+" if p["sign"] > 0 else "-"
            head = f"  [{k}] {sign} {p['form']}"
            if "lambda_min" in p:
                head += f" lambda_min={p['lambda_min']:.6g} PD={'yes' if p['positive_definite'] else 'no'}"
            lines.append(head)
            for g in p["generators"]:
                lines.append("      gen  " + " ".join(f"{v: .6f}" for v in g))
            for g in p.get("gram", []):
                lines.append("      gram " + " ".join(f"{v: .6f}" for v in g))
        for name, ok in r.get("checks", {}).items():
            lines.append(f"  check {name}: {'pass' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n"


def _human_probe(report: dict) -> str:
    lines = [f"# solid-angle {report['version']} probe (cap {report['config']['cap']})"]
    for r in report["cones"]:
        if "error" in r:
            lines.append(f"{r['name']}: FAILED ({r['error']})")
            continue
        for k, p in enumerate(r["pieces"]):
            beta = ", ".join(f"{b:.6g}" for b in p["beta"])
            lines.append(f"{r['name']}[{k}] beta=({beta}) lambda_min={p['lambda_min']:.10g}"
                         f" boundary_residual={p['boundary_residual']:.3e}")
            lines.append("  shift  ratio")
            for l, q in enumerate(p["ratios"]):
                lines.append(f"  {l:5d}  {q:.6e}")
    return "\n".join(lines) + "\n"


def _emit(report: dict, args, human) -> None:
    report = _plain(report)
    if args.json:
        text = dumps(report)
        if args.json == "-":
            sys.stdout.write(text)
            return
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(human(report))


def _load_specs(args) -> list:
    if args.command == "probe" and args.beta is not None:
        beta = [parse_scalar(x) for x in args.beta.split(",") if x.strip()]
        return [ConeSpec("beta", np.array(beta, dtype=float))]
    if args.input is None:
        raise InputError("an input file is required (use - for stdin)")
    _, specs = load_cone_file(args.input)
    return specs


def run(args) -> int:
    specs = _load_specs(args)
    if args.command in ("measure", "estimate"):
        if args.command == "estimate":
            args.method = "mc"
            specs = [ConeSpec(s.name, s.generators, None) for s in specs]
        rows, failed = _run_cones(specs, args, _measure_one)
        human = _human_measure
        config = _config(args)
    elif args.command == "decompose":
        rows, failed = _run_cones(specs, args, _decompose_one)
        human = _human_decompose
        config = _config(args)
    else:
        if args.beta is not None:
            rows, failed = [], []
            try:
                rows.append({"name": "beta", "pieces": [_probe_beta(specs[0].generators, args)]})
            except (SolidAngleError, ArithmeticError, ValueError) as exc:
                log.error("cone beta: %s", exc)
                rows.append({"name": "beta", "error": str(exc)})
                failed.append("beta")
        else:
            rows, failed = _run_cones(specs, args, _probe_one)
        human = _human_probe
        config = _config(args, cap=args.cap, shifts=args.shifts)
    report = {"tool": "solid-angle", "version": __version__, "command": args.command,
              "config": config, "cones": rows}
    _emit(report, args, human)
    if failed:
        print(f"numeric failure in: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _count(text: str) -> int:
    """Positive integer, also accepting forms like 5e7."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v < 1 or v != int(v):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", nargs="?", help="cone file (JSON); - reads stdin")
    common.add_argument("--method", choices=METHODS, default=DEFAULT_METHOD)
    common.add_argument("--tol", type=_positive, default=1e-8, help="absolute error target")
    common.add_argument("--max-terms", type=_count, default=50_000_000,
                        help="series term budget per cone")
    common.add_argument("--samples", type=_count, default=1_000_000, help="Monte Carlo samples")
    common.add_argument("--seed", type=_nonneg, default=0, help="Monte Carlo seed")
    common.add_argument("--jobs", type=_count, default=1, help="cones processed in parallel")
    common.add_argument("--json", metavar="PATH", help="write the machine-readable report here")
    common.add_argument("--span-relative", action="store_true",
                        help="measure relative to the linear span instead of the ambient space")
    common.add_argument("--check", action="store_true",
                        help="decompose: verify the structural properties of every piece")

    p = _Parser(prog="solid-angle", description="Normalized solid angles of polyhedral cones.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("measure", parents=[common], help="measure every cone in the file")
    sub.add_parser("decompose", parents=[common], help="list the signed pieces of every cone")
    probe = sub.add_parser("probe", parents=[common], help="convergence diagnostics of the pieces")
    probe.add_argument("--beta", help="comma separated chain couplings instead of a cone file")
    probe.add_argument("--cap", type=_nonneg, default=20, help="starting cap N for the ratio table")
    probe.add_argument("--shifts", type=_nonneg, default=10, help="number of cap shifts in the table")
    sub.add_parser("estimate", parents=[common], help="Monte Carlo estimate of every cone")
    return p


def _setup_logging() -> None:
    level = os.environ.get("SOLID_ANGLE_LOG", "error").strip().upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[list] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if not hasattr(args, "beta"):
        args.beta = None
    try:
        return run(args)
    except InputError as exc:
        print(f"solid-angle: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
