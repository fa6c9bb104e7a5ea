"""Command-line entry point.

Exit codes: 0 success / all checks pass, 2 a verification failed,
3 usage errors, invalid inputs, or unsupported checks.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import hopsim
from .base import (
    KernelChainError,
    KernelInvalid,
    kernel_from_json,
    kernel_process,
    kernel_to_json,
    search_equivariant_kernel,
    symmetric_pair_kernel,
    trivial_kernel,
    validate_kernel,
)
from .core import BudgetExceeded, ParameterError, UnsupportedCheck
from .descriptor import builtin_process, load_descriptor, save_descriptor
from .extend import ExtensionProcess, sample_trajectory
from .verify import (
    chi_square_uniformity,
    check_avoidance,
    check_posac_orders,
    exact_conditional_laws,
    partial_order_from_meta,
    stationarity_check,
)

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_USAGE = 3


def _out_stream(path: str | None):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _emit(doc: dict, path: str | None) -> None:
    fp, close = _out_stream(path)
    json.dump(doc, fp, indent=1)
    fp.write("\n")
    if close:
        fp.close()


def _load_base(ref: str, posac: bool):
    if ref.startswith("builtin:"):
        proc = builtin_process(ref[len("builtin:"):])
    else:
        with open(ref) as fp:
            proc = kernel_process(kernel_from_json(fp))
    if posac:
        proc = proc.as_posac()
    return proc


def _build_process(args):
    steps = []
    for step_arg in args.extend or []:
        try:
            mode, target = step_arg.split(":")
            target = int(target)
        except ValueError:
            raise ParameterError(f"--extend expects keep:<n> or add:<n>, got {step_arg!r}")
        if mode not in ("keep", "add"):
            raise ParameterError(f"--extend mode must be keep or add, got {mode!r}")
        steps.append((mode, target))
    needs_posac = args.posac or any(mode == "add" for mode, _ in steps)
    proc = _load_base(args.base, posac=needs_posac)
    for mode, target in steps:
        if target <= proc.n:
            raise ParameterError(
                f"extension target n={target} must exceed current n={proc.n}")
        while proc.n < target:
            proc = ExtensionProcess(proc, mode)
    return proc


# --- subcommands -----------------------------------------------------------

def cmd_base(args) -> int:
    if args.action == "make":
        table = (symmetric_pair_kernel(args.n) if args.family == "pair"
                 else trivial_kernel(args.n))
        fp, close = _out_stream(args.out)
        kernel_to_json(table, fp)
        if close:
            fp.close()
        return EXIT_OK
    if args.action == "validate":
        with open(args.kernel) as fp:
            table = kernel_from_json(fp)
        report = validate_kernel(table)
        _emit({"check": "kernel", "pass": report.ok,
               "violations": [v.__dict__ for v in report.violations[:64]],
               "stats": {"n": table.n, "k": table.k, "rows": len(table.rows)}},
              args.out)
        return EXIT_OK if report.ok else EXIT_FAIL
    if args.action == "search":
        result = search_equivariant_kernel(args.n, args.k, args.horizon,
                                           grid_denominator=args.grid_den)
        if result.table is None:
            _emit({"found": False, "candidates_examined": result.candidates_examined,
                   "free_parameters": result.free_parameters}, args.out)
            return EXIT_FAIL
        fp, close = _out_stream(args.out)
        kernel_to_json(result.table, fp)
        if close:
            fp.close()
        print(f"found after {result.candidates_examined} candidates", file=sys.stderr)
        return EXIT_OK
    raise ParameterError(f"unknown base action {args.action!r}")


def cmd_build(args) -> int:
    proc = _build_process(args)
    fp, close = _out_stream(args.out)
    save_descriptor(proc, fp)
    if close:
        fp.close()
    return EXIT_OK


def cmd_extend(args) -> int:
    args.extend = [f"{args.mode}:{args.target_n}"]
    args.posac = args.mode == "add"
    return cmd_build(args)


def cmd_sample(args) -> int:
    with open(args.desc) as fp:
        proc = load_descriptor(fp)
    traj = sample_trajectory(proc, args.t_max, args.seed,
                             labels=args.labels, debug=args.debug)
    fp, close = _out_stream(args.out)
    traj.write_jsonl(fp)
    if close:
        fp.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    with open(args.desc) as fp:
        proc = load_descriptor(fp)
    reports = []
    if args.exact:
        reports.append(exact_conditional_laws(
            proc, args.horizon, budget=args.budget,
            strong_horizon=args.strong_horizon))
    if args.stationarity:
        reports.append(stationarity_check(proc, args.steps, budget=args.budget))
    if args.avoidance or args.posac_orders:
        traj = sample_trajectory(proc, args.rounds, args.seed,
                                 debug=args.posac_orders)
        if args.avoidance:
            reports.append(check_avoidance(traj))
        if args.posac_orders:
            order = proc.partial_order or partial_order_from_meta(traj.meta)
            if order is None:
                raise UnsupportedCheck("process carries no partial-order metadata")
            reports.append(check_posac_orders(traj, order))
    if args.chi2:
        reports.append(chi_square_uniformity(
            proc, args.samples, args.depth, alpha=args.alpha, seed=args.seed))
    if not reports:
        raise ParameterError(
            "select at least one check: --exact/--stationarity/--avoidance/"
            "--chi2/--posac-orders")
    doc = {"schema": "avoidkit/report-v1", "seed": args.seed,
           "process": proc.descriptor(),
           "reports": [r.to_json() for r in reports],
           "pass": all(r.passed for r in reports)}
    _emit(doc, args.out)
    return EXIT_OK if doc["pass"] else EXIT_FAIL


def cmd_hopsim(args) -> int:
    if args.process.startswith("straw:"):
        kind = args.process[len("straw:"):]
        if kind != "round-robin":
            raise ParameterError(f"unknown straw-man schedule {kind!r}")
        source = hopsim.round_robin_schedule(args.n, args.k, args.rounds + 1)
    else:
        with open(args.process) as fp:
            source = load_descriptor(fp)
    report = hopsim.run_adversary(source, args.strategy, args.f, args.rounds,
                                  args.seed, target=args.target,
                                  observe=args.observe)
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    with open(args.desc) as fp:
        proc = load_descriptor(fp)
    sched = hopsim.export_schedule(proc, args.slots, args.seed)
    bad = sched.validate()
    if bad:
        _emit({"error": "schedule violates invariants", "violations": bad[:16]},
              args.out)
        return EXIT_FAIL
    fp, close = _out_stream(args.out)
    if args.format == "csv":
        sched.write_csv(fp)
    else:
        sched.write_jsonl(fp)
    if close:
        fp.close()
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="avoidkit",
        description="Coupled non-colliding random walks on complete graphs: "
                    "build, extend, sample, verify, and run hop simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("base", help="make, validate, or search base kernels")
    b.add_argument("action", choices=["make", "validate", "search"])
    b.add_argument("kernel", nargs="?", help="kernel JSON (validate)")
    b.add_argument("--family", choices=["pair", "trivial"], default="pair")
    b.add_argument("--n", type=int, default=5)
    b.add_argument("--k", type=int, default=2)
    b.add_argument("--horizon", type=int, default=3)
    b.add_argument("--grid-den", type=int, default=60)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_base)

    bd = sub.add_parser("build", help="compose a process descriptor")
    bd.add_argument("--base", required=True,
                    help="builtin:pair-k<n>, builtin:trivial:<n>, or kernel JSON path")
    bd.add_argument("--extend", action="append", metavar="MODE:N",
                    help="keep:<n> or add:<n>; repeatable")
    bd.add_argument("--posac", action="store_true",
                    help="carry order metadata even without add steps")
    bd.add_argument("--out", default=None)
    bd.set_defaults(func=cmd_build)

    ex = sub.add_parser("extend", help="single extension step (build shorthand)")
    ex.add_argument("--base", required=True)
    ex.add_argument("--target-n", type=int, required=True, dest="target_n")
    ex.add_argument("--mode", choices=["keep", "add"], default="keep")
    ex.add_argument("--out", default=None)
    ex.set_defaults(func=cmd_extend)

    sm = sub.add_parser("sample", help="sample a trajectory to JSON lines")
    sm.add_argument("--desc", required=True)
    sm.add_argument("--t-max", type=int, required=True, dest="t_max")
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--labels", action="store_true")
    sm.add_argument("--debug", action="store_true")
    sm.add_argument("--out", default=None)
    sm.set_defaults(func=cmd_sample)

    vf = sub.add_parser("verify", help="run verification checks")
    vf.add_argument("--desc", required=True)
    vf.add_argument("--exact", action="store_true")
    vf.add_argument("--horizon", type=int, default=2)
    vf.add_argument("--strong-horizon", type=int, default=None, dest="strong_horizon")
    vf.add_argument("--stationarity", action="store_true")
    vf.add_argument("--steps", type=int, default=2)
    vf.add_argument("--avoidance", action="store_true")
    vf.add_argument("--posac-orders", action="store_true", dest="posac_orders")
    vf.add_argument("--rounds", type=int, default=100_000)
    vf.add_argument("--chi2", action="store_true")
    vf.add_argument("--samples", type=int, default=1_000_000)
    vf.add_argument("--depth", type=int, default=2)
    vf.add_argument("--alpha", type=float, default=1e-3)
    vf.add_argument("--budget", type=int, default=10_000_000)
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--out", default=None)
    vf.set_defaults(func=cmd_verify)

    hs = sub.add_parser("hopsim", help="run a jamming adversary")
    hs.add_argument("--process", required=True,
                    help="descriptor path or straw:round-robin")
    hs.add_argument("--strategy", required=True,
                    choices=sorted(hopsim.BUILTIN_STRATEGIES))
    hs.add_argument("--f", type=int, required=True)
    hs.add_argument("--rounds", type=int, default=100_000)
    hs.add_argument("--seed", type=int, default=0)
    hs.add_argument("--target", type=int, default=1)
    hs.add_argument("--observe", choices=["target", "all"], default="target")
    hs.add_argument("--n", type=int, default=8, help="frequencies (straw-man only)")
    hs.add_argument("--k", type=int, default=2, help="transmitters (straw-man only)")
    hs.add_argument("--out", default=None)
    hs.set_defaults(func=cmd_hopsim)

    ep = sub.add_parser("export", help="export a hop schedule")
    ep.add_argument("--desc", required=True)
    ep.add_argument("--slots", type=int, required=True)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    ep.add_argument("--out", default=None)
    ep.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParameterError, KernelInvalid, KernelChainError, UnsupportedCheck,
            BudgetExceeded, FileNotFoundError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
