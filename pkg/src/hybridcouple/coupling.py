"""Coupling terms, their validation, and composition into one system.

A coupling term assigns one input of one subsystem::

    dc.u_DC  = W_to_kW(COP * mg.D_load * mg.V_bus * mg.I_O)
    mg.I_O   = mg.V_bus / R_DC
    mg.I_loss = mg.V_bus * H(dc.x_DC1)

Composition replaces every receiver input by its expression, evaluated at
the previous step's values, and concatenates the subsystem states.
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .expr import Expr, parse_expression
from .model import SubsystemModel

KW_PER_W = 1e-3


def W_to_kW(watts):
    return watts * KW_PER_W


# -- temperature-dependent inverse impedance -----------------------------------

@dataclass(frozen=True)
class LinearH:
    """``H(T) = H0 * (1 + gamma * (T - T_ref))`` [1/ohm], T in degC."""

    H0: float = 0.02
    gamma: float = 0.005
    T_ref: float = 20.0

    def __post_init__(self):
        for name in ("H0", "gamma", "T_ref"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", field=f"coupling.{name}")

    def __call__(self, t):
        return self.H0 * (1.0 + self.gamma * (t - self.T_ref))

    def with_gamma(self, gamma):
        return replace(self, gamma=float(gamma))


@dataclass(frozen=True)
class TabulatedH:
    """Piecewise-linear ``H`` through ``(T, H)`` breakpoints, held constant
    beyond the ends.  ``gamma`` is carried only for reporting."""

    temps: tuple
    values: tuple
    gamma: float = float("nan")

    def __post_init__(self):
        t = tuple(float(v) for v in self.temps)
        h = tuple(float(v) for v in self.values)
        if len(t) != len(h) or len(t) < 2 or any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError("H table needs >= 2 strictly increasing temperatures", field="coupling.H_table")
        if not all(map(math.isfinite, h)):
            raise ConfigError("H table values must be finite", field="coupling.H_table")
        object.__setattr__(self, "temps", t)
        object.__setattr__(self, "values", h)

    def __call__(self, t):
        return float(np.interp(t, self.temps, self.values))

    def with_gamma(self, gamma):
        raise ConfigError("a tabulated H has no gamma to sweep", field="coupling.H_table")


@dataclass(frozen=True)
class CouplingParams:
    COP: float = 3.5
    R_DC: float = 3.7
    H: object = field(default_factory=LinearH)
    constants: tuple = ()                  # extra (name, value) pairs

    def __post_init__(self):
        for name in ("COP", "R_DC"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"must be positive, got {v!r}", field=f"coupling.{name}")

    @property
    def gamma(self):
        return self.H.gamma

    def with_gamma(self, gamma):
        return replace(self, H=self.H.with_gamma(gamma))

    def namespace(self):
        consts = {"COP": self.COP, "R_DC": self.R_DC, **dict(self.constants)}
        funcs = {"H": self.H, "W_to_kW": W_to_kW}
        return consts, funcs


def eval_H(p: CouplingParams, t_rack: float) -> float:
    return p.H(t_rack)


# -- terms -----------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingTerm:
    receiver: tuple                 # (model_id, input_name)
    expression: Expr
    line: int = None

    @property
    def receiver_key(self):
        return f"{self.receiver[0]}.{self.receiver[1]}"

    @property
    def models(self):
        return frozenset({self.receiver[0]}) | self.expression.models

    def __str__(self):
        return f"{self.receiver_key} = {self.expression.text}"


def parse_term(text: str, params: CouplingParams = None, line: int = 1) -> CouplingTerm:
    """Parse ``"model.input = expression"``."""
    params = params or CouplingParams()
    lhs, sep, rhs = text.partition("=")
    if not sep or "=" in rhs:
        raise ConfigError(f"coupling term must be 'model.input = expression': {text!r}", line=line)
    recv = lhs.strip().split(".")
    if len(recv) != 2 or not all(p.isidentifier() for p in recv):
        raise ConfigError(f"receiver {lhs.strip()!r} must be model.input", line=line, column=1)
    consts, funcs = params.namespace()
    start = len(lhs) + 1 + len(rhs) - len(rhs.lstrip())
    expr = parse_expression(rhs, consts, funcs, line=line, column=start)
    return CouplingTerm(tuple(recv), expr, line)


REFERENCE_TERMS = (
    "dc.u_DC = W_to_kW(COP * mg.D_load * mg.V_bus * mg.I_O)",
    "mg.I_O = mg.V_bus / R_DC",
    "mg.I_loss = mg.V_bus * H(dc.x_DC1)",
)


def reference_terms(params: CouplingParams = None):
    return [parse_term(t, params) for t in REFERENCE_TERMS]


# -- validation ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    guideline: int
    message: str
    terms: tuple = ()
    cycle: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()
    order: tuple = ()               # receiver keys in evaluation order, when acyclic

    @property
    def ok(self):
        return not self.violations

    def guidelines(self):
        return sorted({v.guideline for v in self.violations})

    def __str__(self):
        if self.ok:
            return "coupling terms satisfy all four guidelines"
        return "\n".join(f"guideline {v.guideline}: {v.message}" for v in self.violations)


class CouplingError(ConfigError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(str(report), field="coupling.terms")


def _signal_roles(sub: SubsystemModel):
    roles = {}
    for group in (sub.states, sub.controls, sub.disturbances, sub.outputs):
        for s in group:
            roles[s.name] = s.role
    return roles


def validate(terms: Sequence[CouplingTerm], subsystems: Sequence[SubsystemModel]) -> ValidationReport:
    """Check the four coupling guidelines.

    1. a term involves at most two models (receiver's included)
    2. the left side is a single input (control or disturbance) signal
    3. no input is a receiver more than once
    4. no input depends on itself through the term set
    Unknown models or signals raise :class:`ConfigError` instead.
    """
    subs = {s.id: s for s in subsystems}
    roles = {sid: _signal_roles(s) for sid, s in subs.items()}

    def known(model, name, where):
        if model not in subs:
            raise ConfigError(f"unknown model {model!r} in {where}", field="coupling.terms")
        if name not in roles[model]:
            raise ConfigError(f"unknown signal {model}.{name} in {where}", field="coupling.terms")

    for t in terms:
        known(*t.receiver, f"term '{t}'")
        for ref in t.expression.refs:
            known(*ref, f"term '{t}'")

    violations = []
    for t in terms:
        if len(t.models) > 2:
            violations.append(Violation(
                1, f"'{t}' involves {len(t.models)} models {sorted(t.models)}", (str(t),)))
        role = roles[t.receiver[0]][t.receiver[1]]
        if role not in ("control", "disturbance"):
            violations.append(Violation(
                2, f"'{t}' assigns {role} signal {t.receiver_key}; only inputs may receive", (str(t),)))

    by_recv = {}
    for t in terms:
        by_recv.setdefault(t.receiver_key, []).append(t)
    for key, ts in by_recv.items():
        if len(ts) > 1:
            violations.append(Violation(
                3, f"{key} receives {len(ts)} times", tuple(str(t) for t in ts)))

    graph = {}
    for key, ts in by_recv.items():
        deps = set()
        for t in ts:
            deps |= {f"{m}.{s}" for m, s in t.expression.refs if f"{m}.{s}" in by_recv}
        graph[key] = deps
    order = ()
    try:
        order = tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        cycle = tuple(exc.args[1])
        involved = tuple(str(t) for k in set(cycle) for t in by_recv[k])
        violations.append(Violation(
            4, "algebraic loop " + " -> ".join(cycle), involved, cycle))
    return ValidationReport(tuple(violations), order if not violations else ())


# -- composition -----------------------------------------------------------------

@dataclass(frozen=True)
class _Slot:
    model: str
    name: str
    source: str          # "free" or "coupled"
    index: int = -1      # position in merged u or d when free


class CoupledSystem:
    """Subsystems advanced synchronously with coupled inputs substituted.

    States, free controls and free disturbances are the concatenation, in
    subsystem order, of each subsystem's signals (qualified ``model.name``).
    """

    def __init__(self, subsystems, terms, params: CouplingParams, report: ValidationReport):
        self.subsystems = tuple(subsystems)
        self.terms = tuple(terms)
        self.params = params
        self.report = report
        dts = {s.dt for s in self.subsystems}
        if len(dts) != 1:
            raise ConfigError(f"subsystem time steps differ: {sorted(dts)}", field="dt")
        self.dt = dts.pop()

        by_key = {t.receiver_key: t for t in self.terms}
        self._ordered_terms = tuple((k, by_key[k].expression.fn) for k in report.order if k in by_key)
        received = set(by_key)

        states, units, controls, dists = [], [], [], []
        self._plan = []
        offset = 0
        for s in self.subsystems:
            n = s.n_states
            u_slots, d_slots = [], []
            for sig in s.controls:
                key = f"{s.id}.{sig.name}"
                if key in received:
                    u_slots.append(_Slot(s.id, sig.name, "coupled"))
                else:
                    u_slots.append(_Slot(s.id, sig.name, "free", len(controls)))
                    controls.append((s.id, sig))
            for sig in s.disturbances:
                key = f"{s.id}.{sig.name}"
                if key in received:
                    d_slots.append(_Slot(s.id, sig.name, "coupled"))
                else:
                    d_slots.append(_Slot(s.id, sig.name, "free", len(dists)))
                    dists.append((s.id, sig))
            states += [f"{s.id}.{sig.name}" for sig in s.states]
            units += [sig.unit for sig in s.states]
            self._plan.append((s, offset, offset + n, tuple(u_slots), tuple(d_slots)))
            offset += n

        self.state_names = tuple(states)
        self.state_units = tuple(units)
        self.control_names = tuple(f"{m}.{sig.name}" for m, sig in controls)
        self.disturbance_names = tuple(f"{m}.{sig.name}" for m, sig in dists)
        self.control_units = tuple(sig.unit for _, sig in controls)
        self.disturbance_units = tuple(sig.unit for _, sig in dists)
        self.coupled_names = tuple(k for k, _ in self._ordered_terms)
        self.n_states = offset
        self._outputs = tuple((s, lo, hi, tuple(f"{s.id}.{n}" for n in s.output_names))
                              for s, lo, hi, _, _ in self._plan if s.outputs)
        self._inputs = tuple((s, lo, hi, tuple(f"{s.id}.{sl.name}" for sl in us),
                              tuple(f"{s.id}.{sl.name}" for sl in ds))
                             for s, lo, hi, us, ds in self._plan)

    def signal_env(self, x, u, d):
        """Every named signal at (x, u, d), coupled inputs included."""
        xs = x.tolist() if isinstance(x, np.ndarray) else list(x)
        us = u.tolist() if isinstance(u, np.ndarray) else list(u)
        ds = d.tolist() if isinstance(d, np.ndarray) else list(d)
        env = dict(zip(self.state_names, xs))
        for s, lo, hi, out_keys in self._outputs:
            env.update(zip(out_keys, s.output_map(np.asarray(xs[lo:hi])).tolist()))
        env.update(zip(self.control_names, us))
        env.update(zip(self.disturbance_names, ds))
        for key, fn in self._ordered_terms:
            env[key] = fn(env)
        return env

    def coupling_values(self, x, u, d):
        env = self.signal_env(x, u, d)
        return {k: env[k] for k in self.coupled_names}

    def step(self, x, u, d):
        return self.advance(x, u, d)[0]

    def advance(self, x, u, d):
        """Next state and the coupled input values used to reach it."""
        env = self.signal_env(x, u, d)
        parts = []
        for s, lo, hi, u_keys, d_keys in self._inputs:
            ui = np.array([env[k] for k in u_keys])
            di = np.array([env[k] for k in d_keys])
            parts.append(s.step(x[lo:hi], ui, di))
        return np.concatenate(parts), tuple(env[k] for k in self.coupled_names)

    def split(self, x):
        """``{model_id: state slice}``."""
        return {s.id: np.asarray(x)[lo:hi] for s, lo, hi, _, _ in self._plan}

    def __repr__(self):
        return (f"CoupledSystem({[s.id for s in self.subsystems]}, {len(self.terms)} terms, "
                f"{self.n_states} states)")


def compose(subsystems, terms, params: CouplingParams = None) -> CoupledSystem:
    """Validate ``terms`` and build the coupled system.

    ``terms`` may be strings or parsed terms; either way they are compiled
    against ``params`` here, so re-composing with new parameters (another
    gamma, say) rebinds ``H`` and the constants.
    """
    params = params or CouplingParams()
    terms = [parse_term(str(t), params, getattr(t, "line", None) or 1) for t in terms]
    report = validate(terms, subsystems)
    if not report.ok:
        raise CouplingError(report)
    return CoupledSystem(subsystems, terms, params, report)


def coupled_step(sys: CoupledSystem, x, u, d) -> np.ndarray:
    return sys.step(np.asarray(x, dtype=np.float64), np.asarray(u, dtype=np.float64),
                    np.asarray(d, dtype=np.float64))
