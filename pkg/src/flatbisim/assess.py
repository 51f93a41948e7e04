"""Vulnerability assessment: abstract, compose, encode, solve, decode, re-check.

A model is vulnerable at bound ``k`` when some ``k``-step path of its finite
abstraction violates the spec.  UNSAT only says nothing violates it within
the bound.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bmc import decode_witness, encode_bmc
from .flat import BnfChain, bnf_slice_box, bnf_states
from .hds import (
    HybridModel, LatticePlant, ModeAbstraction, abstract_mode, compose_abstraction,
    replay_product_path, split_product_state,
)
from .ltl import Formula, Not, Trace, eval_trace, parse_ltl
from .model import ModelFile
from .sat import SAT, TIMEOUT, sat_solve
from .ts import TransitionSystem

__all__ = [
    "VULNERABLE", "NOT_VULNERABLE", "TIMED_OUT", "PipelineError", "Abstraction",
    "AssessmentReport", "build_abstraction", "parse_spec", "assess", "concretize_witness",
    "witness_csv",
]

VULNERABLE = "vulnerable"
NOT_VULNERABLE = "not-vulnerable-at-bound"
TIMED_OUT = "timeout"


class PipelineError(Exception):
    """Failure inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"{stage} stage: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Abstraction:
    model: ModelFile
    hybrid: HybridModel
    modes: Mapping[str, ModeAbstraction]
    product: TransitionSystem
    seconds: float


def build_abstraction(mf: ModelFile) -> Abstraction:
    """Abstract every mode's plant and compose them with the supervisor."""
    t0 = time.perf_counter()
    try:
        hybrid = mf.require_hybrid()
    except ValueError as exc:
        raise PipelineError("model", exc) from exc
    a = mf.analysis
    try:
        modes = {q: abstract_mode(hybrid.mode_specs[q], self_loops=a.self_loops,
                                  cell_budget=a.cell_budget, window_budget=a.window_budget)
                 for q in hybrid.modes}
    except ValueError as exc:
        raise PipelineError("abstraction", exc) from exc
    try:
        product = compose_abstraction(hybrid, urgent=a.urgent, abstractions=modes)
    except ValueError as exc:
        raise PipelineError("composition", exc) from exc
    return Abstraction(mf, hybrid, modes, product, time.perf_counter() - t0)


def parse_spec(mf: ModelFile, name: str) -> Formula:
    if name not in mf.specs:
        raise PipelineError("spec", f"no spec named {name!r}; available: {sorted(mf.specs)}")
    try:
        hybrid = mf.require_hybrid()
        return parse_ltl(mf.specs[name], hybrid.modes, hybrid.labels)
    except ValueError as exc:
        raise PipelineError("spec", f"{name}: {exc}") from exc


@dataclass
class AssessmentReport:
    model: str
    spec: str
    formula: str
    bound: int
    verdict: str
    witness: Trace | None = None
    witness_names: tuple[str, ...] = ()
    statistics: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    concretized_path: list | None = None
    witness_specs: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.witness is None) != (self.verdict != VULNERABLE):
            raise ValueError("a witness is present exactly when the verdict is vulnerable")
        if self.concretized_path is not None and self.witness is None:
            raise ValueError("a concretized path needs a witness")

    def to_dict(self, *, timing: bool = True) -> dict:
        out = {
            "model": self.model,
            "spec": self.spec,
            "formula": self.formula,
            "bound": self.bound,
            "verdict": self.verdict,
            "statistics": dict(self.statistics),
            "witness": None,
            "concretized_path": None,
        }
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "loop_back": w.loop_back,
                "steps": [{"index": i, "state": s, "name": n, "mode": q, "label": k}
                          for i, (s, n, (q, k)) in enumerate(zip(w.states, self.witness_names,
                                                                 w.steps))],
                "other_specs": dict(self.witness_specs),
            }
        if self.concretized_path is not None:
            out["concretized_path"] = {"validated": False, "points": self.concretized_path}
        if timing:
            out["timing"] = dict(self.timing)
        return out

    def to_json(self, *, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing=timing), indent=2, sort_keys=True) + "\n"


def _state_center(ab: Abstraction, s: int):
    q, y = split_product_state(ab.hybrid, ab.modes, s)
    plant = ab.hybrid.mode_specs[q].plant
    if isinstance(plant, LatticePlant):
        return plant.partition.cell_center(y)
    if isinstance(plant, BnfChain):
        lo, hi = bnf_slice_box(plant, bnf_states(plant)[y])
        return (lo + hi) / 2
    return None


def concretize_witness(report: AssessmentReport, ab: Abstraction) -> list | None:
    """Center point of every witness state; not a validated trajectory.

    ``None`` when some state has no geometry (flat alphabet windows).
    """
    if report.witness is None:
        raise ValueError("report has no witness")
    points = []
    for s in report.witness.states:
        c = _state_center(ab, s)
        if c is None:
            return None
        points.append([float(v) for v in np.asarray(c)])
    return points


def _witness_specs(mf: ModelFile, trace: Trace, skip: str) -> dict:
    out = {}
    for name in sorted(mf.specs):
        if name != skip:
            out[name] = eval_trace(parse_spec(mf, name), trace)
    return out


def assess(mf: ModelFile, spec_name: str, bound: int, *, bound_max: int | None = None,
           abstraction: Abstraction | None = None, seed: int | None = None,
           max_conflicts: int | None = None) -> AssessmentReport:
    """Run the pipeline at ``bound``, or deepen ``bound..bound_max`` until vulnerable."""
    phi = parse_spec(mf, spec_name)
    ab = abstraction or build_abstraction(mf)
    if bound < 0:
        raise PipelineError("encoding", "bound must be non-negative")
    last = bound if bound_max is None else bound_max
    if last < bound:
        raise PipelineError("encoding", "bound-max is below the bound")
    seed = mf.analysis.seed if seed is None else seed
    max_conflicts = mf.analysis.sat_conflicts if max_conflicts is None else max_conflicts
    prod = ab.product
    stats = {
        "states": prod.n_states,
        "edges": len(prod.transitions),
        "initial_states": len(prod.initial_states),
        "reachable_states": len(prod.reachable()),
        "modes": len(ab.hybrid.modes),
    }
    timing = {"abstraction_s": round(ab.seconds, 6), "encode_s": 0.0, "solve_s": 0.0}
    tried = []
    for k in range(bound, last + 1):
        t0 = time.perf_counter()
        try:
            cnf = encode_bmc(prod, phi, k)
        except ValueError as exc:
            raise PipelineError("encoding", exc) from exc
        t1 = time.perf_counter()
        res = sat_solve(cnf, seed=seed, max_conflicts=max_conflicts)
        t2 = time.perf_counter()
        timing["encode_s"] = round(timing["encode_s"] + t1 - t0, 6)
        timing["solve_s"] = round(timing["solve_s"] + t2 - t1, 6)
        tried.append(k)
        stats.update({
            "cnf_vars": cnf.num_vars, "cnf_clauses": len(cnf.clauses),
            "conflicts": res.conflicts, "decisions": res.decisions,
            "propagations": res.propagations, "restarts": res.restarts,
            "bounds_tried": list(tried),
        })
        base = dict(model=mf.source or mf.description, spec=spec_name,
                    formula=mf.specs[spec_name], bound=k, statistics=stats, timing=timing)
        if res.status == TIMEOUT:
            return AssessmentReport(verdict=TIMED_OUT, **base)
        if res.status == SAT:
            try:
                trace = decode_witness(cnf, res.assignment, prod, k)
            except AssertionError as exc:
                raise PipelineError("decoding", exc) from exc
            try:
                replay_product_path(ab.hybrid, ab.modes, trace.states, trace.loop_back,
                                    urgent=mf.analysis.urgent)
                if not eval_trace(Not(phi), trace):
                    raise ValueError("witness does not violate the spec")
            except ValueError as exc:
                raise PipelineError("validation", exc) from exc
            report = AssessmentReport(
                verdict=VULNERABLE, witness=trace,
                witness_names=tuple(prod.name(s) for s in trace.states),
                witness_specs=_witness_specs(mf, trace, spec_name), **base)
            report.concretized_path = concretize_witness(report, ab)
            return report
    return AssessmentReport(verdict=NOT_VULNERABLE, **base)


def witness_csv(report: AssessmentReport) -> str:
    """One row per witness step; coordinates of the cell center when known.

    ``loop_back`` is filled on the last row of a lasso with the step it
    returns to.
    """
    if report.witness is None:
        raise ValueError("report has no witness")
    pts = report.concretized_path
    dim = len(pts[0]) if pts else 0
    w = report.witness
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["step", "state", "name", "mode", "label", "loop_back"]
                 + [f"x{j}" for j in range(dim)])
    last = len(w.steps) - 1
    for i, (s, n, (q, k)) in enumerate(zip(w.states, report.witness_names, w.steps)):
        loop = w.loop_back if i == last and w.loop_back is not None else ""
        out.writerow([i, s, n, q, k, loop] + ([repr(v) for v in pts[i]] if pts else []))
    return buf.getvalue()
