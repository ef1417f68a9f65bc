"""Command-line front end: solve, benchmark, sweep, verify.

Exit codes: 0 converged, 1 input error, 2 iteration cap reached,
3 kernel row cap exceeded, 4 verify found a violation.

Benchmark CSV columns are exactly
``method,m,n,erres,ererr,rank_h,frob_h,iters,seconds`` with ``ererr``
left blank when no reference solution is known; the ``adda_oracle``
method rows appear only when m + n <= 200 (the dense reference refuses
larger problems).  The ``seconds`` column is wall clock and is the only
column excluded from golden-file comparisons.

Report JSON schema (solve): termination, iterations, criterion,
tolerance, alpha, beta, erres_final, frob_h, rank_h, seconds, records
(list of {k, value, kernel_order, seconds}).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import benchgen, oracle
from .gth import NotMMatrixError, TripletRepresentation, gth_factorize
from .linalg import frobenius_norm, matmul
from .problem import MareProblem, load_problem, make_shifts
from .solver import (
    SolveReport,
    StopCriteria,
    advance,
    erres,
    ererr,
    initialize,
    kernel_triplet,
    normalized_residual,
    relative_change,
    solve,
)

_EXIT_BY_TERMINATION = {
    "converged": 0,
    "max_iterations": 2,
    "kernel_cap_exceeded": 3,
}
_ORACLE_LIMIT = 200


def _criteria_from_args(args, default_tol, default_max_iter) -> StopCriteria:
    return StopCriteria(
        criterion=args.criterion,
        tolerance=args.tol if args.tol is not None else default_tol,
        max_iterations=(
            args.max_iter if args.max_iter is not None else default_max_iter
        ),
        kernel_row_cap=args.kernel_cap,
    )


def _shifts_from_args(prob, args):
    return make_shifts(prob, alpha=args.alpha, beta=args.beta)


def _report_to_json(report: SolveReport) -> dict:
    return {
        "termination": report.termination,
        "iterations": report.iterations,
        "criterion": report.criterion,
        "tolerance": report.tolerance,
        "alpha": report.alpha,
        "beta": report.beta,
        "erres_final": report.erres_final,
        "frob_h": report.frob_h,
        "rank_h": report.rank_h,
        "seconds": report.seconds,
        "records": [
            {
                "k": r.k,
                "value": r.value,
                "kernel_order": r.kernel_order,
                "seconds": r.seconds,
            }
            for r in report.records
        ],
    }


def _write_report(report: SolveReport, path: str | None) -> None:
    payload = json.dumps(_report_to_json(report), indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)


def cmd_solve(args) -> int:
    try:
        prob = load_problem(args.input)
        rep = prob.validate()
        if not rep.ok:
            for msg in rep.errors:
                print(f"invalid problem: {msg}", file=sys.stderr)
            return 1
        criteria = _criteria_from_args(args, default_tol=1e-14, default_max_iter=20)
        shifts = _shifts_from_args(prob, args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    try:
        report = solve(prob, shifts=shifts, criteria=criteria)
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    _write_report(report, args.out)
    if args.csv:
        np.savetxt(args.csv, report.H, delimiter=",")
    return _EXIT_BY_TERMINATION[report.termination]


# -- benchmarks --------------------------------------------------------------


def _dense_criterion(prob, H, h_prev, kind, x_true):
    if kind == "erres":
        return erres(prob, H)
    if kind == "nres":
        return normalized_residual(prob, H)
    if kind == "rchange":
        return float("inf") if h_prev is None else relative_change(H, h_prev)
    if x_true is None:
        raise ValueError("criterion 'ererr' needs a reference solution")
    return ererr(H, x_true)


def _oracle_run(prob, shifts, criteria, x_true):
    """Dense reference run under the same stopping rule as the solver."""
    t0 = time.perf_counter()
    quad = oracle.initial_quadruple(prob, shifts)
    h_prev = None
    iters = 0
    termination = "max_iterations"
    while True:
        H = quad[3]
        value = _dense_criterion(prob, H, h_prev, criteria.criterion, x_true)
        if value <= criteria.tolerance:
            termination = "converged"
            break
        if iters >= criteria.max_iterations:
            break
        h_prev = H
        quad = oracle.step_quadruple(*quad)
        iters += 1
    H = quad[3]
    sv = np.linalg.svd(H, compute_uv=False)
    rank = 0
    if sv.size and sv[0] > 0.0:
        rank = int(np.sum(sv > 1e-10 * sv[0]))
    return {
        "termination": termination,
        "iters": iters,
        "H": H,
        "erres": erres(prob, H),
        "rank_h": rank,
        "frob_h": frobenius_norm(H),
        "seconds": time.perf_counter() - t0,
    }


def _bench_rows(prob, shifts, criteria, x_true):
    rows = []
    report = solve(prob, shifts=shifts, criteria=criteria, x_true=x_true)
    rows.append(
        {
            "method": "dadda",
            "m": prob.m,
            "n": prob.n,
            "erres": f"{report.erres_final:.16e}",
            "ererr": (
                f"{ererr(report.H, x_true):.16e}" if x_true is not None else ""
            ),
            "rank_h": report.rank_h,
            "frob_h": f"{report.frob_h:.16e}",
            "iters": report.iterations,
            "seconds": f"{report.seconds:.6e}",
        }
    )
    if prob.m + prob.n <= _ORACLE_LIMIT:
        res = _oracle_run(prob, shifts, criteria, x_true)
        rows.append(
            {
                "method": "adda_oracle",
                "m": prob.m,
                "n": prob.n,
                "erres": f"{res['erres']:.16e}",
                "ererr": (
                    f"{ererr(res['H'], x_true):.16e}" if x_true is not None else ""
                ),
                "rank_h": res["rank_h"],
                "frob_h": f"{res['frob_h']:.16e}",
                "iters": res["iters"],
                "seconds": f"{res['seconds']:.6e}",
            }
        )
    return report, rows


def _write_csv(rows, path: str | None) -> None:
    fields = ["method", "m", "n", "erres", "ererr", "rank_h", "frob_h",
              "iters", "seconds"]
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_bench_fluid(args) -> int:
    try:
        prob, x_true = benchgen.gen_fluid(args.m, args.n)
        criteria = _criteria_from_args(args, default_tol=1e-14, default_max_iter=20)
        shifts = _shifts_from_args(prob, args)
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    report, rows = _bench_rows(prob, shifts, criteria, x_true)
    _write_csv(rows, args.csv)
    if args.out:
        _write_report(report, args.out)
    return _EXIT_BY_TERMINATION[report.termination]


def cmd_bench_transport(args) -> int:
    try:
        prob = benchgen.gen_transport(args.n, args.seed)
        criteria = _criteria_from_args(args, default_tol=1e-13, default_max_iter=100)
        shifts = _shifts_from_args(prob, args)
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    report, rows = _bench_rows(prob, shifts, criteria, None)
    _write_csv(rows, args.csv)
    if args.out:
        _write_report(report, args.out)
    return _EXIT_BY_TERMINATION[report.termination]


def cmd_sweep(args) -> int:
    try:
        prob = benchgen.gen_transport(args.n, args.seed)
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    defaults = make_shifts(prob)
    tol = args.tol if args.tol is not None else 1e-13
    max_iter = args.max_iter if args.max_iter is not None else 100
    prefix = args.csv if args.csv else "sweep"
    points = args.points
    for name, fixed in (("alpha", defaults.beta), ("beta", defaults.alpha)):
        bound = 1.0 / float(np.max((prob.A if name == "alpha" else prob.D).diagonal()))
        values = np.linspace(0.0, bound, points)
        rows = []
        for val in values:
            if name == "alpha":
                shifts = make_shifts(prob, alpha=float(val), beta=fixed)
            else:
                shifts = make_shifts(prob, alpha=fixed, beta=float(val))
            criteria = StopCriteria(
                criterion=args.criterion,
                tolerance=tol,
                max_iterations=max_iter,
                kernel_row_cap=args.kernel_cap,
            )
            report = solve(prob, shifts=shifts, criteria=criteria)
            rows.append((f"{val:.16e}", report.iterations,
                         f"{report.erres_final:.16e}"))
        path = f"{prefix}_{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([name, "iters", "erres"])
            writer.writerows(rows)
        print(f"wrote {path} ({len(rows)} rows)")
    return 0


# -- verify ------------------------------------------------------------------


def _verify_fluid(sizes, failures):
    fault = os.environ.get("DADDA_VERIFY_FAULT", "")
    for m, n in sizes:
        prob, x_true = benchgen.gen_fluid(m, n)
        w_ones = np.concatenate(
            [
                prob.D.apply(prob.u1) - matmul(prob.Cl, prob.Cr.T @ prob.u2[:, None])[:, 0],
                prob.A.apply(prob.u2) - matmul(prob.Bl, prob.Br.T @ prob.u1[:, None])[:, 0],
            ]
        )
        if np.max(np.abs(w_ones)) > 1e-12:
            failures.append(f"fluid {m}x{n}: W 1 != 0")
        state = initialize(prob)
        h_prev = state.H
        for _ in range(4):
            advance(state)
            h_new = state.H
            if fault == "sign-flip":
                h_new = h_new.copy()
                h_new[0, 0] = -h_new[0, 0]
            if np.min(h_new - h_prev) < -1e-15:
                failures.append(f"fluid {m}x{n}: monotonicity violated at k={state.k}")
            h_prev = h_new
        res = erres(prob, state.H)
        if res > 1e-14:
            failures.append(f"fluid {m}x{n}: erres {res:.3e} > 1e-14 at k=4")
        err = ererr(state.H, x_true)
        if err > 1e-10:
            failures.append(f"fluid {m}x{n}: ererr {err:.3e} > 1e-10 at k=4")


def _verify_transport(n, seeds, failures):
    for seed in seeds:
        prob = benchgen.gen_transport(n, seed)
        state = initialize(prob)
        for _ in range(4):
            advance(state)
        trip = kernel_triplet(state)
        image = trip.matrix() @ trip.u
        target = trip.v
        scale = max(float(np.max(np.abs(target))), 1e-300)
        if float(np.max(np.abs(image - target))) > 1e-12 * scale:
            failures.append(f"transport n={n} seed={seed}: kernel triplet identity")
        if np.any(state.v1k < 0.0) or np.any(state.v2k < 0.0):
            failures.append(f"transport n={n} seed={seed}: negative kernel image")
        inv = np.linalg.inv(np.eye(trip.n) - matmul(state.Y, state.Z))
        if float(np.min(inv)) < -1e-12:
            failures.append(f"transport n={n} seed={seed}: kernel inverse negative")


def _verify_gth(seed, failures):
    rng = np.random.Generator(np.random.Philox(seed))
    for trial in range(20):
        k = int(rng.integers(2, 9))
        N = rng.uniform(size=(k, k))
        np.fill_diagonal(N, 0.0)
        u = rng.uniform(0.5, 1.5, size=k)
        v = rng.uniform(0.1, 1.0, size=k)
        trip = TripletRepresentation.from_parts(N, u, v)
        try:
            fact = gth_factorize(trip)
        except NotMMatrixError:
            failures.append(f"gth trial {trial}: factorization refused a valid triplet")
            continue
        b = rng.uniform(size=k)
        x = fact.solve(b)
        if np.any(x < 0.0):
            failures.append(f"gth trial {trial}: negative solution for b >= 0")
        ref = np.linalg.solve(trip.matrix(), b)
        rel = float(np.max(np.abs(x - ref) / np.maximum(np.abs(ref), 1e-300)))
        if rel > 1e-12:
            failures.append(f"gth trial {trial}: relative error {rel:.3e}")


def cmd_verify(args) -> int:
    failures: list[str] = []
    sizes = [(2, 18), (18, 2), (90, 10)]
    if args.sizes:
        try:
            sizes = [
                tuple(int(t) for t in chunk.split("x"))
                for chunk in args.sizes.split(",")
            ]
        except ValueError:
            print(f"input error: bad --sizes {args.sizes!r}", file=sys.stderr)
            return 1
    family = args.family
    if family in ("fluid", "all"):
        _verify_fluid(sizes, failures)
    if family in ("transport", "all"):
        _verify_transport(args.n, [args.seed, args.seed + 1], failures)
    if family in ("gth", "all"):
        _verify_gth(args.seed, failures)
    payload = {"ok": not failures, "failures": failures}
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text if not args.out else f"verify: {len(failures)} failure(s)")
    return 4 if failures else 0


# -- argument parsing --------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--alpha", type=float, default=None,
                        help="shift for A (default: largest admissible)")
    parser.add_argument("--beta", type=float, default=None,
                        help="shift for D (default: largest admissible)")
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--criterion", default="erres",
                        choices=["nres", "rchange", "erres", "ererr"])
    parser.add_argument("--kernel-cap", type=int, default=4096)
    parser.add_argument("--out", default=None, help="JSON report path")
    parser.add_argument("--csv", default=None, help="CSV output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dadda",
        description="Doubling solver for M-matrix algebraic Riccati equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem from a JSON file")
    p.add_argument("--input", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench-fluid", help="run the fluid-flow family")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_bench_fluid)

    p = sub.add_parser("bench-transport", help="run the transport family")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_bench_transport)

    p = sub.add_parser("sweep", help="sweep both shifts on a transport instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run invariant checks on generated instances")
    p.add_argument("--family", default="all",
                   choices=["fluid", "transport", "gth", "all"])
    p.add_argument("--sizes", default=None,
                   help="fluid sizes as MxN pairs, e.g. 2x18,90x10")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
