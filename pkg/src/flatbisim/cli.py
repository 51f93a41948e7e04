"""Command line entry point.

Exit codes: 0 not vulnerable at the bound, 1 vulnerable, 2 usage or model
error, 3 solver timeout.  Commands that do not check anything exit 0 on
success.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assess import (
    NOT_VULNERABLE, TIMED_OUT, VULNERABLE, PipelineError, assess, build_abstraction, parse_spec,
    witness_csv,
)
from .bmc import encode_bmc
from .flat import BnfChain, FlatAlphabetSpec
from .hds import LatticePlant
from .model import ENV_CELL_BUDGET, ENV_SAT_CONFLICTS, ENV_WINDOW_BUDGET, load_model
from .ode import (
    CIRCADIAN_STATES, SOCIAL_STATES, OdeModel, SimulationError, SingularityError,
    recover_circadian, recover_social, simulate_ode, trajectory_from_csv, trajectory_to_csv,
)
from .sat import SAT, TIMEOUT, dimacs_export, sat_solve
from .ts import to_dot

EXIT_OK = 0
EXIT_VULNERABLE = 1
EXIT_ERROR = 2
EXIT_TIMEOUT = 3

_VERDICT_EXIT = {NOT_VULNERABLE: EXIT_OK, VULNERABLE: EXIT_VULNERABLE, TIMED_OUT: EXIT_TIMEOUT}


class UsageError(Exception):
    pass


def _plant_kind(plant) -> str:
    if isinstance(plant, LatticePlant):
        return "linear"
    if isinstance(plant, BnfChain):
        return "bnf"
    if isinstance(plant, FlatAlphabetSpec):
        return "flat_alphabet"
    return "ode"


def _write(path: str, data: str | bytes) -> None:
    p = Path(path)
    if isinstance(data, bytes):
        p.write_bytes(data)
    else:
        p.write_text(data, encoding="utf-8", newline="\n")


def cmd_abstract(args) -> int:
    mf = load_model(args.model)
    ab = build_abstraction(mf)
    lines = ["mode,plant,states,edges"]
    for q in ab.hybrid.modes:
        ts = ab.modes[q].ts
        lines.append(f"{q},{_plant_kind(ab.hybrid.mode_specs[q].plant)},{ts.n_states},"
                     f"{len(ts.transitions)}")
    prod = ab.product
    lines.append(f"*,product,{prod.n_states},{len(prod.transitions)}")
    if args.dot:
        _write(args.dot, to_dot(prod, name="abstraction"))
    print("\n".join(lines))
    return EXIT_OK


def cmd_check(args) -> int:
    mf = load_model(args.model)
    bound = mf.analysis.bound if args.bound is None else args.bound
    phi = parse_spec(mf, args.spec)
    ab = build_abstraction(mf)
    try:
        cnf = encode_bmc(ab.product, phi, bound)
    except ValueError as exc:
        raise PipelineError("encoding", exc) from exc
    res = sat_solve(cnf, seed=mf.analysis.seed, max_conflicts=mf.analysis.sat_conflicts)
    if args.dimacs:
        _write(args.dimacs, dimacs_export(cnf))
    print(f"result,{res.status}")
    print(f"bound,{bound}")
    print(f"vars,{cnf.num_vars}")
    print(f"clauses,{len(cnf.clauses)}")
    print(f"conflicts,{res.conflicts}")
    if res.status == TIMEOUT:
        return EXIT_TIMEOUT
    return EXIT_VULNERABLE if res.status == SAT else EXIT_OK


def cmd_assess(args) -> int:
    mf = load_model(args.model)
    bound = mf.analysis.bound if args.bound is None else args.bound
    report = assess(mf, args.spec, bound, bound_max=args.bound_max)
    text = report.to_json(timing=not args.no_timing)
    # everything is computed before anything is written
    outputs = []
    if args.trace and report.witness is not None:
        outputs.append((args.trace, witness_csv(report)))
    if args.report:
        outputs.append((args.report, text))
    for path, data in outputs:
        _write(path, data)
    if args.plot and report.witness is not None:
        from .plotting import plot_witness
        plot_witness(report.witness.steps, args.plot, report.concretized_path,
                     report.witness.loop_back, title=f"{args.spec}: {report.formula}")
    if args.report:
        print(f"{report.verdict},bound={report.bound}")
    else:
        sys.stdout.write(text)
    return _VERDICT_EXIT[report.verdict]


def _ode_plant(mf, name) -> OdeModel:
    if name not in mf.plants:
        raise UsageError(f"no plant named {name!r}; available: {sorted(mf.plants)}")
    plant = mf.plants[name]
    if not isinstance(plant, OdeModel):
        raise UsageError(f"plant {name!r} is not an ODE model")
    return plant


def cmd_simulate(args) -> int:
    mf = load_model(args.model)
    plant = _ode_plant(mf, args.plant)
    with np.errstate(over="ignore", invalid="ignore"):
        tr = simulate_ode(plant)
    cols = {n: tr.column(n) for n in tr.names}
    text = trajectory_to_csv(tr.time, cols)
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)
    if args.plot:
        from .plotting import plot_trajectory
        plot_trajectory(tr.time, cols, args.plot, title=f"{args.plant} ({plant.name})")
    return EXIT_OK


def _uniform_step(time: np.ndarray) -> float:
    if len(time) < 5:
        raise UsageError("need at least 5 samples to differentiate")
    d = np.diff(time)
    step = float(d.mean())
    if step <= 0 or np.max(np.abs(d - step)) > 1e-6 * max(step, 1e-12) + 1e-12:
        raise UsageError("time column must be uniformly spaced")
    return step


def cmd_recover(args) -> int:
    mf = load_model(args.model)
    plant = _ode_plant(mf, args.plant)
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{args.input}: {exc.strerror or exc}") from None
    try:
        time, cols = trajectory_from_csv(text)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    step = _uniform_step(time)
    if plant.name == "social":
        if "E" not in cols:
            raise UsageError(f"{args.input}: missing flat output column 'E'")
        P, M, lam = recover_social(cols["E"], plant.parameters, step)
        rec = {"P": P, "M": M, "E": cols["E"], "Lambda": lam}
        states = SOCIAL_STATES
    else:
        if "C_N" not in cols:
            raise UsageError(f"{args.input}: missing flat output column 'C_N'")
        r = recover_circadian(cols["C_N"], plant.parameters, step,
                              phospho_numerator=plant.phospho_numerator,
                              nuclear_decay=plant.nuclear_decay)
        rec = {n: r[n] for n in CIRCADIAN_STATES if n in r}
        rec["C_N"] = cols["C_N"]
        rec["v_sp"] = r["v_sp"]
        states = CIRCADIAN_STATES
    out = trajectory_to_csv(time, rec)
    if args.csv:
        _write(args.csv, out)
    else:
        sys.stdout.write(out)
    # compare with any state columns the input already had
    for name in states:
        if name in cols and name in rec and cols[name] is not rec[name]:
            ok = np.isfinite(rec[name]) & (np.abs(cols[name]) > 0)
            if ok.any():
                err = np.max(np.abs(rec[name][ok] - cols[name][ok]) / np.abs(cols[name][ok]))
                print(f"max_rel_error,{name},{err:.3e}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_recovery
        plot_recovery(time, rec, args.plot, reference=cols, title=f"{args.plant} recovery")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flatbisim",
        description="Finite bisimulations of flat hybrid systems and LTL vulnerability checks.",
        epilog=f"Budget overrides: {ENV_CELL_BUDGET}, {ENV_WINDOW_BUDGET}, {ENV_SAT_CONFLICTS}. "
               "Exit codes: 0 not vulnerable at the bound, 1 vulnerable, 2 usage or model "
               "error, 3 timeout.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    a = sub.add_parser("abstract", help="build the finite abstraction and summarize it")
    a.add_argument("model")
    a.add_argument("--dot", metavar="OUT", help="write the abstraction as Graphviz DOT")
    a.set_defaults(func=cmd_abstract)

    c = sub.add_parser("check", help="bounded model check one spec")
    c.add_argument("model")
    c.add_argument("--spec", required=True, metavar="NAME")
    c.add_argument("--bound", type=int, metavar="K", help="default: the model's analysis.bound")
    c.add_argument("--dimacs", metavar="OUT", help="write the CNF in DIMACS format")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("assess", help="full assessment with witness report")
    s.add_argument("model")
    s.add_argument("--spec", required=True, metavar="NAME")
    s.add_argument("--bound", type=int, metavar="K", help="default: the model's analysis.bound")
    s.add_argument("--bound-max", type=int, metavar="K",
                   help="deepen from --bound up to this bound, stopping at the first witness")
    s.add_argument("--report", metavar="OUT.json")
    s.add_argument("--trace", metavar="OUT.csv", help="witness steps as CSV")
    s.add_argument("--plot", metavar="OUT.png", help="witness figure")
    s.add_argument("--no-timing", action="store_true", help="omit timings for reproducible reports")
    s.set_defaults(func=cmd_assess)

    m = sub.add_parser("simulate", help="simulate an ODE plant")
    m.add_argument("model")
    m.add_argument("--plant", required=True, metavar="NAME")
    m.add_argument("--csv", metavar="OUT")
    m.add_argument("--plot", metavar="OUT.png")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("recover", help="rebuild states and input from a flat output trajectory")
    r.add_argument("model")
    r.add_argument("--plant", required=True, metavar="NAME")
    r.add_argument("--input", required=True, metavar="TRAJ.csv")
    r.add_argument("--csv", metavar="OUT")
    r.add_argument("--plot", metavar="OUT.png")
    r.set_defaults(func=cmd_recover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PipelineError, UsageError, SimulationError, SingularityError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
