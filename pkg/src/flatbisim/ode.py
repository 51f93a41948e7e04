"""Example flat ODE models: social movement and circadian gene network.

Both are simulated with a fixed-step classical Runge-Kutta integrator and
come with flat-output recovery: all states and the input are rebuilt from
a sampled flat-output trajectory using finite-difference derivatives.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "OdeModel",
    "Trajectory",
    "SimulationError",
    "SingularityError",
    "SOCIAL_STATES",
    "CIRCADIAN_STATES",
    "DEFAULT_CIRCADIAN",
    "DEFAULT_SOCIAL",
    "simulate_ode",
    "central_diff",
    "recover_social",
    "recover_circadian",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

SOCIAL_STATES = ("P", "M", "E")
SOCIAL_PARAMS = ("Lambda", "beta", "delta1", "delta2", "delta3")

CIRCADIAN_STATES = ("M_P", "P_0", "P_1", "P_2", "C", "C_N")
CIRCADIAN_PARAMS = (
    "v_sp", "K_IP", "n", "v_mp", "K_mp", "k_d", "k_sp",
    "V_1P", "K_1P", "V_2P", "K_2P", "V_3P", "K_3P", "V_4P", "K_4P",
    "k_3", "k_4", "v_dp", "K_dp", "k_1", "k_2", "k_dc",
)

# Oscillatory set chosen by hand (period about 25 time units); not from any
# published fit.
DEFAULT_CIRCADIAN = {
    "v_sp": 1.0, "K_IP": 1.0, "n": 4.0, "v_mp": 0.7, "K_mp": 0.2, "k_d": 0.01,
    "k_sp": 0.9, "V_1P": 8.0, "K_1P": 2.0, "V_2P": 1.0, "K_2P": 2.0,
    "V_3P": 8.0, "K_3P": 2.0, "V_4P": 1.0, "K_4P": 2.0, "k_3": 1.2, "k_4": 0.6,
    "v_dp": 2.0, "K_dp": 0.2, "k_1": 0.6, "k_2": 0.2, "k_dc": 0.01,
}

DEFAULT_SOCIAL = {"Lambda": 0.2, "beta": 0.5, "delta1": 0.1, "delta2": 0.3, "delta3": 0.05}

DENOM_TOL = 1e-9


class SimulationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:g}")
        self.time = time


class SingularityError(ValueError):
    """A flat-output inversion is ill-posed; ``equation`` names the model equation."""

    def __init__(self, equation: int, message: str, index: int | None = None):
        where = f" (sample {index})" if index is not None else ""
        super().__init__(f"equation {equation}: {message}{where}")
        self.equation = equation
        self.index = index


@dataclass(frozen=True)
class OdeModel:
    """A named example model with constant parameters and input.

    ``phospho_numerator`` picks the numerator of the third circadian
    equation's ``V_3P`` term: ``"P_1"`` (matching the fourth equation,
    default) or ``"P_0"`` as printed.  ``nuclear_decay`` picks the last
    term of the sixth equation: ``"C"`` gives ``-k_dc*C`` as printed,
    ``"C_N"`` gives ``-k_dn*C_N``.
    """

    name: str
    parameters: Mapping[str, float]
    initial_state: tuple[float, ...]
    horizon: float
    step: float
    phospho_numerator: str = "P_1"
    nuclear_decay: str = "C"

    def __post_init__(self):
        if self.name not in ("social", "circadian"):
            raise ValueError(f"unknown model {self.name!r}")
        need = SOCIAL_PARAMS if self.name == "social" else CIRCADIAN_PARAMS
        params = {k: float(v) for k, v in self.parameters.items()}
        missing = [k for k in need if k not in params]
        if self.name == "circadian" and self.nuclear_decay == "C_N" and "k_dn" not in params:
            missing.append("k_dn")
        if missing:
            raise ValueError(f"{self.name} model missing parameters {missing}")
        if self.phospho_numerator not in ("P_0", "P_1") or self.nuclear_decay not in ("C", "C_N"):
            raise ValueError("unknown circadian equation reading")
        nstate = len(self.state_names)
        if len(self.initial_state) != nstate:
            raise ValueError(f"{self.name} model has {nstate} states")
        if not (0 < self.step < self.horizon):
            raise ValueError("need 0 < step < horizon")
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))

    @property
    def state_names(self) -> tuple[str, ...]:
        return SOCIAL_STATES if self.name == "social" else CIRCADIAN_STATES

    def vector_field(self) -> Callable[[np.ndarray], np.ndarray]:
        p = self.parameters
        if self.name == "social":
            lam, beta, d1, d2, d3 = (p[k] for k in SOCIAL_PARAMS)

            def f(x):
                P, M, E = x
                return np.array([
                    lam - beta * P * M + d1 * E,
                    beta * P * M - d2 * M * E - d3 * M,
                    d2 * M * E + d3 * M - d1 * E,
                ])
            return f
        return _circadian_field(p, self.phospho_numerator, self.nuclear_decay)


def _mm(V, K, z):
    return V * z / (K + z)


def _circadian_field(p, phospho_numerator, nuclear_decay):
    g = p.get

    def f(x):
        MP, P0, P1, P2, C, CN = x
        kin = g("K_IP") ** g("n")
        v3_num = P1 if phospho_numerator == "P_1" else P0
        decay = g("k_dc") * C if nuclear_decay == "C" else g("k_dn") * CN
        return np.array([
            g("v_sp") * kin / (kin + CN ** g("n")) - _mm(g("v_mp"), g("K_mp"), MP) - g("k_d") * MP,
            g("k_sp") * MP - _mm(g("V_1P"), g("K_1P"), P0) + _mm(g("V_2P"), g("K_2P"), P1)
            - g("k_d") * P0,
            _mm(g("V_1P"), g("K_1P"), P0) - _mm(g("V_2P"), g("K_2P"), P1)
            - g("V_3P") * v3_num / (g("K_3P") + P1) + _mm(g("V_4P"), g("K_4P"), P2) - g("k_d") * P1,
            _mm(g("V_3P"), g("K_3P"), P1) - _mm(g("V_4P"), g("K_4P"), P2) - g("k_3") * P2 ** 2
            + g("k_4") * C - _mm(g("v_dp"), g("K_dp"), P2) - g("k_d") * P2,
            g("k_3") * P2 ** 2 - g("k_4") * C - g("k_1") * C + g("k_2") * CN - g("k_dc") * C,
            g("k_1") * C - g("k_2") * CN - decay,
        ])
    return f


@dataclass(frozen=True)
class Trajectory:
    time: np.ndarray
    states: np.ndarray
    names: tuple[str, ...]

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.names.index(name)]


def rk4(f, x0, step, n_steps):
    xs = np.empty((n_steps + 1, len(x0)))
    x = np.asarray(x0, dtype=float)
    xs[0] = x
    h = step
    for i in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError("non-finite state", (i + 1) * h)
        xs[i + 1] = x
    return xs


def simulate_ode(model: OdeModel) -> Trajectory:
    n_steps = int(round(model.horizon / model.step))
    xs = rk4(model.vector_field(), model.initial_state, model.step, n_steps)
    t = np.arange(n_steps + 1) * model.step
    return Trajectory(t, xs, model.state_names)


def central_diff(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central difference; the two samples at each end become NaN."""
    y = np.asarray(y, dtype=float)
    d = np.full_like(y, np.nan)
    if len(y) >= 5:
        d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    return d


def _guard_nonzero(values, equation, what):
    bad = np.isfinite(values) & (np.abs(values) < DENOM_TOL)
    if bad.any():
        raise SingularityError(equation, f"{what} vanishes", int(np.argmax(bad)))


def recover_social(E: Sequence[float], params: Mapping[str, float], step: float):
    """Rebuild ``(P, M, Lambda)`` from samples of the flat output ``E``.

    Samples whose stencils reach past the ends are NaN.
    """
    E = np.asarray(E, dtype=float)
    beta, d1, d2, d3 = (float(params[k]) for k in ("beta", "delta1", "delta2", "delta3"))
    dE = central_diff(E, step)
    denom = d2 * E + d3
    _guard_nonzero(denom, 3, "delta2*E + delta3")
    M = (dE + d1 * E) / denom
    _guard_nonzero(M, 2, "M")
    dM = central_diff(M, step)
    if beta == 0:
        raise SingularityError(2, "beta is zero")
    P = (dM + d2 * M * E + d3 * M) / (beta * M)
    dP = central_diff(P, step)
    lam = dP + beta * P * M - d1 * E
    return P, M, lam


def _open_interval_guard(R, upper, equation, name):
    finite = np.isfinite(R)
    bad = finite & ((R <= 0) | (R >= upper))
    if bad.any():
        raise SingularityError(equation, f"residual {name} outside (0, {upper:g})",
                               int(np.argmax(bad)))


def recover_circadian(CN: Sequence[float], params: Mapping[str, float], step: float, *,
                      phospho_numerator: str = "P_1", nuclear_decay: str = "C"):
    """Invert the circadian chain from samples of the flat output ``C_N``.

    Returns a dict with ``C, P_2, P_1, P_0, M_P, v_sp`` arrays (NaN where a
    stencil reaches past the ends).  Equations are numbered 1..6 top to
    bottom (``dM_P/dt`` is 1, ``dC_N/dt`` is 6).
    """
    g = {k: float(v) for k, v in params.items()}
    CN = np.asarray(CN, dtype=float)
    h = step

    dCN = central_diff(CN, h)
    if nuclear_decay == "C":
        coef = g["k_1"] - g["k_dc"]
        if abs(coef) < DENOM_TOL:
            raise SingularityError(6, "k_1 equals k_dc")
        C = (dCN + g["k_2"] * CN) / coef
    else:
        if abs(g["k_1"]) < DENOM_TOL:
            raise SingularityError(6, "k_1 is zero")
        C = (dCN + (g["k_2"] + g["k_dn"]) * CN) / g["k_1"]

    dC = central_diff(C, h)
    radicand = (dC + (g["k_4"] + g["k_1"] + g["k_dc"]) * C - g["k_2"] * CN) / g["k_3"]
    neg = np.isfinite(radicand) & (radicand < 0)
    if neg.any():
        raise SingularityError(5, "negative radicand for P_2", int(np.argmax(neg)))
    P2 = np.sqrt(radicand)

    dP2 = central_diff(P2, h)
    R3 = (dP2 + _mm(g["V_4P"], g["K_4P"], P2) + g["k_3"] * P2 ** 2 - g["k_4"] * C
          + _mm(g["v_dp"], g["K_dp"], P2) + g["k_d"] * P2)
    _open_interval_guard(R3, g["V_3P"], 4, "V_3P*P_1/(K_3P+P_1)")
    P1 = R3 * g["K_3P"] / (g["V_3P"] - R3)

    dP1 = central_diff(P1, h)
    rest = (dP1 + _mm(g["V_2P"], g["K_2P"], P1) - _mm(g["V_4P"], g["K_4P"], P2)
            + g["k_d"] * P1)
    if phospho_numerator == "P_1":
        R1 = rest + _mm(g["V_3P"], g["K_3P"], P1)
        _open_interval_guard(R1, g["V_1P"], 3, "V_1P*P_0/(K_1P+P_0)")
        P0 = R1 * g["K_1P"] / (g["V_1P"] - R1)
    else:
        P0 = _solve_printed_eq3(rest, P1, g)

    dP0 = central_diff(P0, h)
    if abs(g["k_sp"]) < DENOM_TOL:
        raise SingularityError(2, "k_sp is zero")
    MP = (dP0 + _mm(g["V_1P"], g["K_1P"], P0) - _mm(g["V_2P"], g["K_2P"], P1)
          + g["k_d"] * P0) / g["k_sp"]

    dMP = central_diff(MP, h)
    kin = g["K_IP"] ** g["n"]
    vsp = (dMP + _mm(g["v_mp"], g["K_mp"], MP) + g["k_d"] * MP) * (kin + CN ** g["n"]) / kin
    return {"C": C, "P_2": P2, "P_1": P1, "P_0": P0, "M_P": MP, "v_sp": vsp}


def _solve_printed_eq3(rest, P1, g):
    # V1*P0/(K1+P0) - c*P0 = rest with c = V3/(K3+P1):
    # -c*P0^2 + (V1 - c*K1 - rest)*P0 - rest*K1 = 0; take the smaller
    # nonnegative root, on the rising branch of the left-hand side.
    c = g["V_3P"] / (g["K_3P"] + P1)
    a = -c
    b = g["V_1P"] - c * g["K_1P"] - rest
    cc = -rest * g["K_1P"]
    disc = b * b - 4 * a * cc
    neg = np.isfinite(disc) & (disc < 0)
    if neg.any():
        raise SingularityError(3, "no real P_0 root", int(np.argmax(neg)))
    sq = np.sqrt(np.where(np.isfinite(disc), disc, np.nan))
    r1 = (-b + sq) / (2 * a)
    r2 = (-b - sq) / (2 * a)
    lo = np.minimum(r1, r2)
    hi = np.maximum(r1, r2)
    root = np.where(lo >= 0, lo, hi)
    bad = np.isfinite(root) & (root < 0)
    if bad.any():
        raise SingularityError(3, "no nonnegative P_0 root", int(np.argmax(bad)))
    return root


def trajectory_to_csv(time: np.ndarray, columns: Mapping[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(["time"] + names)
    for i, t in enumerate(time):
        w.writerow([repr(float(t))] + [repr(float(columns[c][i])) for c in names])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "time":
        raise ValueError("trajectory CSV must start with a 'time' header column")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    cols = {name: data[:, j] for j, name in enumerate(header[1:], start=1)}
    return data[:, 0], cols
