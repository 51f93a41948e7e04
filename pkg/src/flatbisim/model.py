"""JSON model files.

A model file names its plants, optionally glues them into a hybrid model,
and lists LTL specs plus analysis settings::

    {
      "schema": "flatbisim-model/1",
      "plants": {"chain": {"type": "bnf", "n": 2, "epsilon": 1.0, "x1_range": [0, 4]}},
      "hybrid": {"modes": ["q0"], "labels": ["ok"], "plants": {"q0": "chain"}},
      "specs": {"safe": "G (q0,ok)"},
      "analysis": {"bound": 4}
    }

Unknown keys are errors.  Without a hybrid section the single non-ODE
plant becomes mode ``q0``, each abstract state labelled by its own name.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
import math
import os
from dataclasses import dataclass, field, replace
from importlib.resources import files
from pathlib import Path
from typing import Any, Mapping

from .flat import DEFAULT_WINDOW_BUDGET, BnfChain, FlatAlphabetSpec
from .hds import (
    GuardBox, HybridModel, LatticePlant, ModeSpec, abstract_state_names,
    initial_from_points,
)
from .lattice import DEFAULT_CELL_BUDGET, LatticePartition, LinearSystem
from .ode import CIRCADIAN_STATES, DEFAULT_CIRCADIAN, DEFAULT_SOCIAL, SOCIAL_STATES, OdeModel

__all__ = ["SCHEMA", "ModelFileError", "Analysis", "ModelFile", "load_model", "parse_model",
           "demo_path",
           "ENV_CELL_BUDGET", "ENV_WINDOW_BUDGET", "ENV_SAT_CONFLICTS"]

SCHEMA = "flatbisim-model/1"
ENV_CELL_BUDGET = "FLATBISIM_CELL_BUDGET"
ENV_WINDOW_BUDGET = "FLATBISIM_WINDOW_BUDGET"
ENV_SAT_CONFLICTS = "FLATBISIM_SAT_CONFLICTS"


class ModelFileError(ValueError):
    """Malformed model file; the message starts with the offending key path."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class Analysis:
    bound: int = 10
    cell_budget: int = DEFAULT_CELL_BUDGET
    window_budget: int = DEFAULT_WINDOW_BUDGET
    sat_conflicts: int | None = None
    self_loops: bool = True
    urgent: bool = True
    seed: int = 0


@dataclass(frozen=True)
class ModelFile:
    plants: Mapping[str, Any]
    hybrid: HybridModel | None
    specs: Mapping[str, str]
    analysis: Analysis
    description: str = ""
    source: str = ""
    standalone: bool = field(default=False)

    def require_hybrid(self) -> HybridModel:
        if self.hybrid is None:
            raise ModelFileError("hybrid", "model has no abstractable plant")
        return self.hybrid


# -- small strict-JSON helpers ----------------------------------------------

def _obj(value, where, required=(), optional=()):
    if not isinstance(value, dict):
        raise ModelFileError(where, "expected an object")
    unknown = sorted(set(value) - set(required) - set(optional))
    if unknown:
        raise ModelFileError(where, f"unknown field(s) {unknown}")
    missing = [k for k in required if k not in value]
    if missing:
        raise ModelFileError(where, f"missing field(s) {missing}")
    return value


def _num(value, where, *, allow_inf=False):
    if value is None and allow_inf:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFileError(where, "expected a number")
    if not math.isfinite(value) and not allow_inf:
        raise ModelFileError(where, "expected a finite number")
    return float(value)


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelFileError(where, "expected an integer")
    if minimum is not None and value < minimum:
        raise ModelFileError(where, f"must be at least {minimum}")
    return value


def _str(value, where):
    if not isinstance(value, str) or not value:
        raise ModelFileError(where, "expected a non-empty string")
    return value


def _list(value, where, length=None):
    if not isinstance(value, list):
        raise ModelFileError(where, "expected a list")
    if length is not None and len(value) != length:
        raise ModelFileError(where, f"expected {length} entries, got {len(value)}")
    return value


def _vec(value, where, length=None):
    return [_num(v, f"{where}[{i}]") for i, v in enumerate(_list(value, where, length))]


@contextmanager
def _wrapped(where):
    """Re-raise constructor errors with the key path they came from."""
    try:
        yield
    except ModelFileError:
        raise
    except ValueError as exc:
        raise ModelFileError(where, str(exc)) from None


def _matrix(value, where, rows=None, cols=None):
    value = _list(value, where, rows)
    return [_vec(r, f"{where}[{i}]", cols) for i, r in enumerate(value)]


# -- plants -----------------------------------------------------------------

def _linear(d, where):
    _obj(d, where, ("type", "lower", "upper", "epsilon"), ("A", "B", "n", "m", "A_triplets",
                                                            "B_triplets"))
    if "A" in d:
        if "A_triplets" in d or "B_triplets" in d:
            raise ModelFileError(where, "give A/B either dense or as triplets, not both")
        A = _matrix(d["A"], f"{where}.A")
        n = len(A)
        if n == 0 or any(len(r) != n for r in A):
            raise ModelFileError(f"{where}.A", "must be a non-empty square matrix")
        B = _matrix(d.get("B", [[] for _ in range(n)]), f"{where}.B", n)
        m = len(B[0]) if B else 0
        if any(len(r) != m for r in B):
            raise ModelFileError(f"{where}.B", "rows have different lengths")
        system = LinearSystem.from_dense(A, B if m else None)
    else:
        if "n" not in d or "A_triplets" not in d:
            raise ModelFileError(where, "sparse form needs n, m, A_triplets")
        n = _int(d["n"], f"{where}.n", 1)
        m = _int(d.get("m", 0), f"{where}.m", 0)
        with _wrapped(where):
            system = LinearSystem.from_triplets(n, m, _triplets(d, "A_triplets", where),
                                                _triplets(d, "B_triplets", where))
    n = system.n
    with _wrapped(where):
        part = LatticePartition(_vec(d["lower"], f"{where}.lower", n),
                                _vec(d["upper"], f"{where}.upper", n),
                                _eps(d["epsilon"], f"{where}.epsilon", n))
    return LatticePlant(system, part)


def _triplets(d, key, where):
    out = []
    for i, t in enumerate(_list(d.get(key, []), f"{where}.{key}")):
        w = f"{where}.{key}[{i}]"
        t = _list(t, w, 3)
        out.append((_int(t[0], f"{w}[0]", 0), _int(t[1], f"{w}[1]", 0), _num(t[2], f"{w}[2]")))
    return out


def _eps(value, where, n):
    if isinstance(value, list):
        return _vec(value, where, n)
    return [_num(value, where)] * n


def _bnf(d, where):
    _obj(d, where, ("type", "n", "epsilon", "x1_range"), ("orthant_bound",))
    with _wrapped(where):
        return BnfChain(_int(d["n"], f"{where}.n", 1), _num(d["epsilon"], f"{where}.epsilon"),
                        tuple(_vec(d["x1_range"], f"{where}.x1_range", 2)),
                        _num(d.get("orthant_bound", 1.0), f"{where}.orthant_bound"))


def _flat_alphabet(d, where):
    _obj(d, where, ("type", "symbols", "memory"))
    syms = [_str(s, f"{where}.symbols[{i}]")
            for i, s in enumerate(_list(d["symbols"], f"{where}.symbols"))]
    with _wrapped(where):
        return FlatAlphabetSpec(tuple(syms), _int(d["memory"], f"{where}.memory", 1))


def _ode(d, where):
    _obj(d, where, ("type", "model", "initial_state", "horizon", "step"),
         ("parameters", "phospho_numerator", "nuclear_decay"))
    kind = d["model"]
    if kind not in ("social", "circadian"):
        raise ModelFileError(f"{where}.model", "expected 'social' or 'circadian'")
    defaults = DEFAULT_SOCIAL if kind == "social" else DEFAULT_CIRCADIAN
    params = dict(defaults)
    for key, val in _obj(d.get("parameters", {}), f"{where}.parameters",
                         optional=tuple(defaults) + ("k_dn",)).items():
        params[key] = _num(val, f"{where}.parameters.{key}")
    dim = len(SOCIAL_STATES if kind == "social" else CIRCADIAN_STATES)
    with _wrapped(where):
        return OdeModel(kind, params, tuple(_vec(d["initial_state"], f"{where}.initial_state", dim)),
                        _num(d["horizon"], f"{where}.horizon"), _num(d["step"], f"{where}.step"),
                        phospho_numerator=d.get("phospho_numerator", "P_1"),
                        nuclear_decay=d.get("nuclear_decay", "C"))


_PLANT_READERS = {"linear": _linear, "bnf": _bnf, "flat_alphabet": _flat_alphabet, "ode": _ode}


def _plant(d, where):
    if not isinstance(d, dict) or "type" not in d:
        raise ModelFileError(where, "plant needs a 'type'")
    reader = _PLANT_READERS.get(d["type"])
    if reader is None:
        raise ModelFileError(f"{where}.type", f"unknown plant type {d['type']!r}; expected one "
                                              f"of {sorted(_PLANT_READERS)}")
    return reader(d, where)


# -- hybrid section ---------------------------------------------------------

def _guard_boxes(value, where, dim):
    boxes = []
    for i, b in enumerate(_list(value, where)):
        w = f"{where}[{i}]"
        _obj(b, w, ("label", "lower", "upper"))
        lo = [_num(v, f"{w}.lower[{j}]", allow_inf=True)
              for j, v in enumerate(_list(b["lower"], f"{w}.lower", dim))]
        hi = [_num(v, f"{w}.upper[{j}]", allow_inf=True)
              for j, v in enumerate(_list(b["upper"], f"{w}.upper", dim))]
        lo = [-math.inf if v is None else v for v in lo]
        hi = [math.inf if v is None else v for v in hi]
        boxes.append(GuardBox(_str(b["label"], f"{w}.label"), lo, hi))
    return tuple(boxes)


def _plant_dim(plant):
    if isinstance(plant, LatticePlant):
        return plant.partition.n
    if isinstance(plant, BnfChain):
        return plant.n
    return None


def _hybrid(d, plants, where="hybrid"):
    _obj(d, where, ("modes", "labels", "plants"),
         ("default_label", "h", "guards", "symbol_guards", "rehome", "initial"))
    modes = [_str(m, f"{where}.modes[{i}]") for i, m in enumerate(_list(d["modes"], f"{where}.modes"))]
    labels = [_str(k, f"{where}.labels[{i}]")
              for i, k in enumerate(_list(d["labels"], f"{where}.labels"))]
    default = d.get("default_label")
    if default is not None and default not in labels:
        raise ModelFileError(f"{where}.default_label", f"{default!r} is not a declared label")
    mode_plants = _obj(d["plants"], f"{where}.plants", tuple(modes))
    guards = _obj(d.get("guards", {}), f"{where}.guards", optional=tuple(modes))
    sym_guards = _obj(d.get("symbol_guards", {}), f"{where}.symbol_guards", optional=tuple(modes))
    specs = {}
    for q in modes:
        name = mode_plants[q]
        if name not in plants:
            raise ModelFileError(f"{where}.plants.{q}", f"unknown plant {name!r}")
        plant = plants[name]
        if isinstance(plant, OdeModel):
            raise ModelFileError(f"{where}.plants.{q}", f"plant {name!r} is an ODE model; modes "
                                                        f"need an abstractable plant")
        dim = _plant_dim(plant)
        boxes = ()
        if q in guards:
            if dim is None:
                raise ModelFileError(f"{where}.guards.{q}", "flat alphabet plants take "
                                                             "symbol_guards")
            boxes = _guard_boxes(guards[q], f"{where}.guards.{q}", dim)
        symbols = {}
        if q in sym_guards:
            if dim is not None:
                raise ModelFileError(f"{where}.symbol_guards.{q}", "only flat alphabet plants "
                                                                    "take symbol guards")
            symbols = {str(k): _str(v, f"{where}.symbol_guards.{q}.{k}")
                       for k, v in _obj(sym_guards[q], f"{where}.symbol_guards.{q}",
                                        optional=tuple(str(s) for s in plant.symbols)).items()}
        for lab in [b.label for b in boxes] + list(symbols.values()):
            if lab not in labels:
                raise ModelFileError(f"{where}.guards.{q}", f"label {lab!r} is not declared")
        specs[q] = ModeSpec(plant, boxes, symbols, default)
    # unlisted (q, k) pairs keep the mode
    h = {(q, k): q for q in modes for k in labels}
    for i, row in enumerate(_list(d.get("h", []), f"{where}.h")):
        w = f"{where}.h[{i}]"
        _obj(row, w, ("q", "k", "next"))
        q, k, nxt = row["q"], row["k"], row["next"]
        if q not in modes or nxt not in modes:
            raise ModelFileError(w, "names an undeclared mode")
        if k not in labels:
            raise ModelFileError(w, f"names undeclared label {k!r}")
        h[(q, k)] = nxt
    rehome = {}
    for i, row in enumerate(_list(d.get("rehome", []), f"{where}.rehome")):
        w = f"{where}.rehome[{i}]"
        _obj(row, w, ("from", "to", "map"))
        rehome[(row["from"], row["to"])] = [_int(v, f"{w}.map[{j}]", 0)
                                            for j, v in enumerate(_list(row["map"], f"{w}.map"))]
    initial = None
    if "initial" in d:
        initial = []
        for i, row in enumerate(_list(d["initial"], f"{where}.initial")):
            w = f"{where}.initial[{i}]"
            _obj(row, w, ("mode",), ("points", "states"))
            q = row["mode"]
            if q not in modes:
                raise ModelFileError(w, f"unknown mode {q!r}")
            if "points" in row:
                dim = _plant_dim(specs[q].plant)
                pts = [_vec(p, f"{w}.points[{j}]", dim)
                       for j, p in enumerate(_list(row["points"], f"{w}.points"))]
                with _wrapped(w):
                    initial.extend((q, y) for y in initial_from_points(specs[q], pts))
            if "states" in row:
                initial.extend((q, _int(y, f"{w}.states[{j}]", 0))
                               for j, y in enumerate(_list(row["states"], f"{w}.states")))
        if not initial:
            raise ModelFileError(f"{where}.initial", "no initial states given")
    with _wrapped(where):
        return HybridModel(tuple(modes), tuple(labels), h, specs, rehome, initial)


def _standalone(plants, analysis):
    candidates = [(n, p) for n, p in plants.items() if not isinstance(p, OdeModel)]
    if not candidates:
        return None
    if len(candidates) > 1:
        raise ModelFileError("hybrid", f"several plants {[n for n, _ in candidates]} and no "
                                       f"hybrid section to combine them")
    _, plant = candidates[0]
    if isinstance(plant, FlatAlphabetSpec):
        labels = tuple(str(s) for s in plant.symbols)
        spec = ModeSpec(plant, symbols={str(s): str(s) for s in plant.symbols})
    else:
        # each abstract state is its own label
        labels = abstract_state_names(plant)
        if len(labels) > analysis.cell_budget:
            raise ModelFileError("plants", f"{len(labels)} abstract states exceed the budget")
        spec = ModeSpec(plant, state_labels=labels)
    return HybridModel(("q0",), labels, {("q0", k): "q0" for k in labels}, {"q0": spec})


def _analysis(d, where="analysis"):
    _obj(d, where, optional=("bound", "cell_budget", "window_budget", "sat_conflicts",
                             "self_loops", "urgent", "seed"))
    a = Analysis()
    kw = {}
    for key in ("bound", "cell_budget", "window_budget", "seed"):
        if key in d:
            kw[key] = _int(d[key], f"{where}.{key}", 0 if key in ("bound", "seed") else 1)
    if "sat_conflicts" in d and d["sat_conflicts"] is not None:
        kw["sat_conflicts"] = _int(d["sat_conflicts"], f"{where}.sat_conflicts", 1)
    for key in ("self_loops", "urgent"):
        if key in d:
            if not isinstance(d[key], bool):
                raise ModelFileError(f"{where}.{key}", "expected true or false")
            kw[key] = d[key]
    return replace(a, **kw)


def _env_overrides(a: Analysis, env: Mapping[str, str]) -> Analysis:
    kw = {}
    for var, key in ((ENV_CELL_BUDGET, "cell_budget"), (ENV_WINDOW_BUDGET, "window_budget"),
                     (ENV_SAT_CONFLICTS, "sat_conflicts")):
        raw = env.get(var)
        if raw is None or raw == "":
            continue
        try:
            val = int(raw)
        except ValueError:
            raise ModelFileError(var, f"expected an integer, got {raw!r}") from None
        if val < 1:
            raise ModelFileError(var, "must be positive")
        kw[key] = val
    return replace(a, **kw)


def parse_model(data: Mapping | str, *, source: str = "",
                env: Mapping[str, str] | None = None) -> ModelFile:
    """Validate a model document and build its plants and hybrid model."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    _obj(data, "model", ("schema", "plants"), ("description", "hybrid", "specs", "analysis"))
    if data["schema"] != SCHEMA:
        raise ModelFileError("schema", f"expected {SCHEMA!r}, got {data['schema']!r}")
    raw_plants = _obj(data["plants"], "plants", optional=tuple(data["plants"])
                      if isinstance(data["plants"], dict) else ())
    plants = {name: _plant(p, f"plants.{name}") for name, p in raw_plants.items()}
    analysis = _env_overrides(_analysis(data.get("analysis", {})),
                              os.environ if env is None else env)
    specs = {}
    for name, text in _obj(data.get("specs", {}), "specs",
                           optional=tuple(data.get("specs", {}) or ())).items():
        specs[name] = _str(text, f"specs.{name}")
    if "hybrid" in data:
        hybrid, standalone = _hybrid(data["hybrid"], plants), False
    else:
        hybrid, standalone = _standalone(plants, analysis), True
    desc = data.get("description", "")
    if not isinstance(desc, str):
        raise ModelFileError("description", "expected a string")
    return ModelFile(plants, hybrid, specs, analysis, desc, source, standalone)


def demo_path(name: str) -> Path:
    """Path of a model file shipped with the package, e.g. ``demo_path("relay_demo")``."""
    p = Path(str(files("flatbisim").joinpath("data", f"{name}.json")))
    if not p.is_file():
        raise FileNotFoundError(f"no shipped model named {name!r}")
    return p


def load_model(path: str | os.PathLike, *, env: Mapping[str, str] | None = None) -> ModelFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(str(p), exc.strerror or str(exc)) from None
    return parse_model(text, source=p.name, env=env)
