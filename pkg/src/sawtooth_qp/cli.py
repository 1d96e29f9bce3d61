"""Command-line front end: ``sawtooth-qp {solve,area,check,export,bench}``.

Exit codes: 0 on success, 2 on bad input (unreadable files or invalid
flags), 3 when the solver fails or a check suite fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, graycode, paritycuts
from .formats import export_lp_text, export_mps
from .formulations import METHODS, normalize_method, relax_qp
from .instances import InstanceFormatError, QpInstance, read_instance
from .sawtooth import interpolant_eval, max_error
from .shift import ShiftVector, eigen_shift, load_shift_file, validate_psd
from .solver import MipOptions, SolverFailure, gap, shifted_geomean, solve_mip

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
INSTANCE_SUFFIXES = (".txt", ".boxqp", ".json", ".dat")
SOLVE_CSV_HEADER = ["instance", "method", "levels", "status", "dual_bound", "primal_bound", "gap",
                    "nodes", "oa_cuts", "callback_cuts", "wall_time"]
SUMMARY_CSV_HEADER = ["method", "levels", "instances", "solved", "time_sgm", "gap_sgm"]


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _load_instance(path: str) -> QpInstance:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"instance file not found: {path}")
    try:
        return read_instance(p)
    except (InstanceFormatError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _resolve_shift(option: str, instance: QpInstance) -> ShiftVector:
    if option == "eigen":
        return eigen_shift(instance.Q)
    if option.startswith("file:"):
        try:
            shift = load_shift_file(option[5:], instance.n)
        except (OSError, ValueError) as exc:
            raise InputError(f"shift file: {exc}") from None
        if not validate_psd(instance.Q, shift):
            raise InputError("shift file does not make Q + diag(delta) positive semidefinite")
        return shift
    raise InputError(f"unknown shift option {option!r}; use eigen or file:PATH")


def _levels(value: str) -> int:
    L = int(value)
    if L < 1:
        raise argparse.ArgumentTypeError("levels must be at least 1")
    return L


def _method(value: str) -> str:
    try:
        return normalize_method(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def _clean(v):
    """JSON-safe scalar: non-finite floats become null."""
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def instance_value(instance: QpInstance, x, tol: float = 1e-6):
    """Cost of the instance at the first ``n`` (+aux) entries of ``x`` if feasible there, else None."""
    n, naux = instance.n, len(instance.aux_cost)
    xs = np.asarray(x[:n], dtype=float)
    aux = np.asarray(x[n : n + naux], dtype=float)
    if np.any(xs < instance.lower - tol) or np.any(xs > instance.upper + tol):
        return None
    full = np.concatenate([xs, aux])
    for coeffs, sense, rhs in instance.linear_constraints:
        act = sum(a * full[k] for k, a in coeffs.items())
        if (sense == "<=" and act > rhs + tol) or (sense == ">=" and act < rhs - tol) or (sense == "=" and abs(act - rhs) > tol):
            return None
    for qc in instance.quadratic_constraints:
        val = qc.value(xs)
        if (qc.sense == "<=" and val > qc.rhs + tol) or (qc.sense == ">=" and val < qc.rhs - tol):
            return None
    return instance.objective(xs, aux if naux else None)


def run_solve(instance: QpInstance, method: str, L: int, shift: ShiftVector | None = None, cuts: bool = False,
              cutoff: float | None = None, time_limit: float = 600.0, node_limit: int = 1_000_000,
              branching: str = "most-fractional") -> dict:
    """Build the relaxation, solve it and return the documented result record."""
    model, handles = relax_qp(instance, method, L, shift)
    callback = None
    if cuts and method in ("NN", "BHH1", "BHH2"):
        callback = paritycuts.parity_callback(handles)
    opts = MipOptions(node_limit=node_limit, time_limit=time_limit, cut_callback=callback, cutoff=cutoff, branching=branching)
    res = solve_mip(model, opts)
    primal = instance_value(instance, res.x) if res.x is not None else None
    return {
        "instance": instance.name,
        "method": method,
        "levels": L,
        "status": res.status,
        "dual_bound": _clean(res.dual_bound),
        "primal_bound": _clean(primal),
        "relaxation_value": _clean(res.primal_bound),
        "gap": _clean(gap(res.dual_bound, primal)) if primal not in (None, 0.0) else None,
        "nodes": res.nodes,
        "oa_cuts": res.oa_cuts,
        "callback_cuts": res.callback_cuts,
        "root_bound": _clean(res.root_bound),
        "wall_time": res.wall_time,
        "binaries": len(model.binary_ids()),
    }


def _emit_rows(rows, header, out):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in header])
    out.write(buf.getvalue())


def cmd_solve(args, out) -> int:
    instance = _load_instance(args.instance)
    shift = _resolve_shift(args.shift, instance)
    try:
        record = run_solve(instance, args.method, args.levels, shift, args.cuts == "on", args.cutoff,
                           args.time_limit, args.node_limit, args.branching)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out == "json":
        out.write(json.dumps(record, indent=2, sort_keys=True) + "\n")
    else:
        _emit_rows([record], SOLVE_CSV_HEADER, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# area
# ---------------------------------------------------------------------------


def cmd_area(args, out) -> int:
    a, b = args.interval
    if a > b:
        raise InputError("interval must satisfy a <= b")
    if args.samples < 100:
        raise InputError("samples must be at least 100")
    reports = analysis.area_ratio_table(args.method, (a, b), args.levels_up_to, args.samples, numeric=not args.closed_only)
    out.write(analysis.area_csv(reports))
    return EXIT_OK


# ---------------------------------------------------------------------------
# check suites
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def suite_graycode(max_L: int = 10, max_restricted: int = 8) -> list[CheckResult]:
    results = []
    flips = adjacency = doubling = True
    for L in range(1, max_L + 1):
        codes = graycode.gray_sequence(L)
        flips &= all(codes[i].hamming(codes[i + 1]) == 1 for i in range(len(codes) - 1))
        flips &= all(graycode.gray_decode(c) == i for i, c in enumerate(codes))
        if L > 1:
            # reflected construction: prefix 0 on the shorter list, prefix 1 on its reverse
            shorter = graycode.gray_sequence(L - 1)
            expected = [(0,) + c.bits for c in shorter] + [(1,) + c.bits for c in reversed(shorter)]
            adjacency &= [c.bits for c in codes] == expected
        for i in range(2**L):
            lo, hi = graycode.double_extension(i, L)
            last = graycode.binary_encode(i, L).bits[-1] if L else 0
            doubling &= lo.bits == codes[i].bits + (last,) and hi.bits == codes[i].bits + (1 - last,)
    results.append(CheckResult("one_bit_flip", flips))
    results.append(CheckResult("reflected_recursion", adjacency))
    results.append(CheckResult("double_extension", doubling))
    restricted = True
    for L in range(1, max_restricted + 1):
        codes = graycode.gray_sequence(L)
        for fix in itertools.product((None, 0, 1), repeat=L):
            fixed = {p + 1: v for p, v in enumerate(fix) if v is not None}
            seq = graycode.restricted_sequence(L, fixed)
            free = seq.free_positions
            for j, (value, sub) in enumerate(zip(seq.values, seq.free_codes)):
                plain = graycode.gray_encode(j, len(free)).bits if free else ()
                if sub.bits != tuple(p ^ o for p, o in zip(plain, seq.offset.bits)):
                    restricted = False
                if tuple(codes[value][p - 1] for p in free) != sub.bits:
                    restricted = False
            if len(seq.values) != 2 ** len(free):
                restricted = False
    results.append(CheckResult("restricted_sequence", restricted))
    return results


def suite_sharpness(max_L: int = 5, grid: int = 513) -> list[CheckResult]:
    results = []
    for L in range(1, max_L + 1):
        rep = analysis.sharpness_check(L, grid)
        results.append(CheckResult(f"sharpness_L{L}", rep.max_deviation < 1e-8, f"deviation {rep.max_deviation:.3g}"))
    return results


def suite_hereditary(max_L: int = 3) -> list[CheckResult]:
    results = []
    for L in range(1, max_L + 1):
        worst = 0.0
        for fix in itertools.product((None, 0, 1), repeat=L):
            fixed = {p + 1: v for p, v in enumerate(fix) if v is not None}
            worst = max(worst, analysis.hereditary_check(L, fixed).deviation)
        results.append(CheckResult(f"hereditary_L{L}", worst < 1e-8, f"deviation {worst:.3g} over {3**L} restrictions"))
    return results


def cut_validity(cuts, L: int) -> float:
    """Largest violation of the given cuts over the fragment's integer-feasible vertices."""
    worst = -np.inf
    for g0, g, alpha in paritycuts.integer_points(L):
        for cut in cuts:
            worst = max(worst, cut.violation(g0, g[-1], alpha))
    return worst


def suite_cuts(max_L: int = 5, samples: int = 200, seed: int = 0, cuts_override=None) -> list[CheckResult]:
    """Validity of separated cuts on integer points, plus greedy-vs-exhaustive subset choice.

    ``cuts_override`` maps L to an explicit cut list to check instead of the separated ones.
    """
    rng = np.random.default_rng(seed)
    results = []
    for L in range(1, max_L + 1):
        if cuts_override is not None:
            cuts = cuts_override.get(L, [])
        else:
            cuts = [paritycuts.best_cut_for(base, rng.random(L)) for _ in range(samples) for base in paritycuts.base_cuts(L)]
        worst = cut_validity(cuts, L) if cuts else -np.inf
        results.append(CheckResult(f"cut_validity_L{L}", worst <= 1e-9, f"max violation {worst:.3g}"))
    agree = True
    for j in range(1, 11):
        for _ in range(20):
            alpha = rng.random(j)
            for odd in (True, False):
                g = paritycuts.subset_cost(alpha, paritycuts.greedy_subset(alpha, odd))
                e = paritycuts.subset_cost(alpha, paritycuts.exhaustive_subset(alpha, odd))
                agree &= abs(g - e) <= 1e-12
    results.append(CheckResult("greedy_matches_exhaustive", agree))
    return results


def suite_nmdt_error(max_L: int = 4) -> list[CheckResult]:
    results = []
    for L in range(1, max_L + 1):
        plain = max(c.worst for c in analysis.nmdt_cell_errors(L, tightened=False))
        tight = max(c.worst for c in analysis.nmdt_cell_errors(L, tightened=True))
        envelope = analysis.bilinear_envelope_gap(2.0**-L)
        results.append(CheckResult(f"nmdt_max_error_L{L}", plain <= 2.0 ** (-L - 2) + 1e-12 and abs(envelope - 2.0 ** (-L - 2)) < 1e-15,
                                   f"cell max {plain:.6g}, envelope gap {envelope:.6g}"))
        results.append(CheckResult(f"tnmdt_max_error_L{L}", abs(tight - 2.0 ** (-2 * L - 2)) < 1e-12, f"cell max {tight:.6g}"))
        over, under = analysis.residual_envelope_errors(L)
        ok = abs(over / (4.0**-L / 6) - 1) < 0.05 and abs(under / (4.0**-L / 12) - 1) < 0.05
        results.append(CheckResult(f"tnmdt_expected_error_L{L}", ok, f"over {over:.4g}, under {under:.4g}"))
    return results


def suite_approximation(max_L: int = 8, grid: int = 100_001) -> list[CheckResult]:
    """Interpolant error on a uniform grid augmented with the segment midpoints of each level."""
    uniform = np.linspace(0.0, 1.0, grid)
    results = []
    for L in range(0, max_L + 1):
        mids = (2.0 * np.arange(2**L) + 1.0) / 2.0 ** (L + 1)
        xs = np.union1d(uniform, mids)
        err = float(np.max(interpolant_eval(L, xs) - xs * xs))
        at_mids = interpolant_eval(L, mids) - mids * mids
        ok = abs(err - max_error(L)) <= 1e-12 and bool(np.all(np.abs(at_mids - max_error(L)) <= 1e-12))
        results.append(CheckResult(f"interpolant_error_L{L}", ok, f"max error {err:.6g}, attained at all {mids.size} midpoints"))
    return results


SUITES = {
    "graycode": suite_graycode,
    "sharpness": suite_sharpness,
    "hereditary": suite_hereditary,
    "cuts": suite_cuts,
    "nmdt-error": suite_nmdt_error,
    "approximation": suite_approximation,
}


def cmd_check(args, out) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        for res in SUITES[name]():
            out.write(f"{'PASS' if res.passed else 'FAIL'} {name}:{res.name} {res.detail}".rstrip() + "\n")
            failed += not res.passed
    return EXIT_OK if failed == 0 else EXIT_SOLVER


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def cmd_export(args, out) -> int:
    instance = _load_instance(args.instance)
    shift = _resolve_shift(args.shift, instance)
    model, _ = relax_qp(instance, args.method, args.levels, shift)
    text = export_mps(model) if args.format == "mps" else export_lp_text(model)
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _worker_count() -> int:
    raw = os.environ.get("SAWTOOTH_QP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"SAWTOOTH_QP_THREADS must be an integer, got {raw!r}") from None


def summarize(rows: list[dict]) -> list[dict]:
    """Per (method, levels) shifted geometric means of time and gap.

    The gap uses the best primal value seen for each instance across all
    rows; the time shift is the family's minimum time and the gap shift is
    ``max(1e-4, minimum gap)``.
    """
    best = {}
    for r in rows:
        if r["primal_bound"] is not None:
            best[r["instance"]] = min(best.get(r["instance"], np.inf), r["primal_bound"])
    out = []
    keys = sorted({(r["method"], r["levels"]) for r in rows}, key=lambda k: (METHODS.index(k[0]), k[1]))
    for method, L in keys:
        fam = [r for r in rows if r["method"] == method and r["levels"] == L]
        times = [r["wall_time"] for r in fam]
        gaps = []
        for r in fam:
            bpb = best.get(r["instance"])
            if bpb is not None and bpb != 0 and r["dual_bound"] is not None:
                gaps.append(gap(r["dual_bound"], bpb))
        time_shift = min(times) if times else 0.0
        gap_shift = max(1e-4, min(gaps)) if gaps else 1e-4
        out.append({
            "method": method,
            "levels": L,
            "instances": len(fam),
            "solved": sum(r["status"] == "optimal" for r in fam),
            "time_sgm": shifted_geomean(times, time_shift) if times and time_shift > 0 else (float(np.mean(times)) if times else None),
            "gap_sgm": shifted_geomean(gaps, gap_shift) if gaps else None,
        })
    return out


def cmd_bench(args, out) -> int:
    folder = Path(args.instances)
    if not folder.is_dir():
        raise InputError(f"not a directory: {folder}")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in INSTANCE_SUFFIXES)
    if not files:
        raise InputError(f"no instance files in {folder}")
    try:
        methods = [normalize_method(m) for m in args.methods.split(",")]
        levels = [int(v) for v in args.levels.split(",")]
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if any(L < 1 for L in levels):
        raise InputError("levels must be at least 1")
    instances = [_load_instance(str(p)) for p in files]
    for inst, p in zip(instances, files):
        inst.name = p.stem
    jobs = [(inst, m, L) for inst in instances for m in methods for L in levels]

    def run(job):
        inst, m, L = job
        return run_solve(inst, m, L, None, args.cuts == "on", None, args.time_limit, args.node_limit)

    try:
        with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
            rows = list(pool.map(run, jobs))
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out == "json":
        payload = {"runs": rows}
        if args.summary:
            payload["summary"] = [{k: _clean(v) for k, v in s.items()} for s in summarize(rows)]
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        _emit_rows(rows, SOLVE_CSV_HEADER, out)
        if args.summary:
            out.write("\n")
            _emit_rows(summarize(rows), SUMMARY_CSV_HEADER, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sawtooth-qp", description="Sawtooth MIP relaxations for nonconvex quadratic programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--instance", required=True, help="boxQP text file or JSON instance dump")
        p.add_argument("--method", type=_method, default="NN", help="nn, bhh1, bhh2, nmdt or tnmdt")
        p.add_argument("--levels", type=_levels, default=3, help="number of layers / binary digits (>= 1)")
        p.add_argument("--shift", default="eigen", help="eigen or file:PATH (one value per line)")

    p = sub.add_parser("solve", help="solve a relaxation and report bounds")
    add_model_flags(p)
    p.add_argument("--cuts", choices=("on", "off"), default="off", help="parity cut separation (sawtooth methods)")
    p.add_argument("--cutoff", type=float, default=None, help="known primal value used to prune")
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--node-limit", type=int, default=1_000_000)
    p.add_argument("--branching", choices=("most-fractional", "pseudo-cost-lite"), default="most-fractional")
    p.add_argument("--out", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("area", help="closed-form and Riemann areas of a relaxation")
    p.add_argument("--method", type=_method, default="BHH1")
    p.add_argument("--levels-up-to", type=int, default=4)
    p.add_argument("--interval", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"))
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--closed-only", action="store_true", help="skip the numeric Riemann sums")
    p.set_defaults(func=cmd_area)

    p = sub.add_parser("check", help="run a property suite")
    p.add_argument("--suite", choices=tuple(SUITES) + ("all",), required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", help="write the relaxation as MPS or LP text")
    add_model_flags(p)
    p.add_argument("--format", choices=("mps", "lp"), default="mps")
    p.add_argument("--output", default=None, help="file to write (default: stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="solve every instance in a folder")
    p.add_argument("--instances", required=True, help="folder of instance files")
    p.add_argument("--methods", default="nn", help="comma separated methods")
    p.add_argument("--levels", default="3", help="comma separated layer counts")
    p.add_argument("--cuts", choices=("on", "off"), default="off")
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--node-limit", type=int, default=1_000_000)
    p.add_argument("--summary", action="store_true", help="append shifted geometric means per method and level")
    p.add_argument("--out", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
