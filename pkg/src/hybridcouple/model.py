"""Discrete-time state-space abstraction shared by every subsystem.

A :class:`SubsystemModel` is a map ``x_k = step(x_{k-1}, u_{k-1}, d_{k-1})``
with named, unit-labelled signals.  Continuous models are turned into one
with :func:`discretize_euler`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, UsageError

ROLES = ("state", "control", "disturbance", "output")

StepFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
DerivativeFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Signal:
    name: str
    role: str
    unit: str = "dimensionless"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown signal role {self.role!r}", field=self.name)
        if not self.name.isidentifier():
            raise ConfigError(f"signal name {self.name!r} is not an identifier")


def signals(role, *specs):
    """Build a tuple of signals of one role from ``(name, unit)`` pairs."""
    return tuple(Signal(name, role, unit) for name, unit in specs)


class StateVector:
    """Ordered, named vector of finite state values.

    >>> sv = StateVector([1.0, 2.0], ["a", "b"])
    >>> sv["b"]
    2.0
    """

    __slots__ = ("values", "names", "index")

    def __init__(self, values, names: Sequence[str]):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        names = tuple(names)
        if arr.shape[0] != len(names):
            raise UsageError(f"{arr.shape[0]} values for {len(names)} state names")
        if len(set(names)) != len(names):
            raise UsageError("duplicate state names")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            i = int(bad[0])
            raise DivergenceError(names[i], value=float(arr[i]))
        arr.flags.writeable = False
        self.values = arr
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float], names: Sequence[str]):
        missing = [n for n in names if n not in mapping]
        if missing:
            raise UsageError(f"missing state values for {missing}")
        return cls([mapping[n] for n in names], names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index[name]])

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))

    def __repr__(self):
        body = ", ".join(f"{n}={v:.6g}" for n, v in zip(self.names, self.values))
        return f"StateVector({body})"


def _check_unique(sigs: Sequence[Signal], role: str, owner: str):
    names = [s.name for s in sigs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate {role} signal names {dupes}", field=owner)
    for s in sigs:
        if s.role != role:
            raise ConfigError(f"signal {s.name!r} has role {s.role!r}, expected {role!r}", field=owner)


@dataclass(frozen=True)
class _Signals:
    id: str
    states: tuple
    controls: tuple = ()
    disturbances: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        if not self.id.isidentifier():
            raise ConfigError(f"model id {self.id!r} is not an identifier")
        for role, sigs in (("state", self.states), ("control", self.controls),
                           ("disturbance", self.disturbances), ("output", self.outputs)):
            object.__setattr__(self, _plural(role), tuple(sigs))
            _check_unique(sigs, role, self.id)

    @property
    def state_names(self):
        return tuple(s.name for s in self.states)

    @property
    def control_names(self):
        return tuple(s.name for s in self.controls)

    @property
    def disturbance_names(self):
        return tuple(s.name for s in self.disturbances)

    @property
    def output_names(self):
        return tuple(s.name for s in self.outputs)

    @property
    def n_states(self):
        return len(self.states)

    def signal(self, name: str) -> Signal:
        for group in (self.states, self.controls, self.disturbances, self.outputs):
            for s in group:
                if s.name == name:
                    return s
        raise KeyError(name)


def _plural(role):
    return {"state": "states", "control": "controls",
            "disturbance": "disturbances", "output": "outputs"}[role]


def _no_outputs(x):
    return np.empty(0)


@dataclass(frozen=True)
class ContinuousModel(_Signals):
    """``dx/dt = derivative(x, u, d)``."""

    derivative: DerivativeFn = None


@dataclass(frozen=True)
class SubsystemModel(_Signals):
    """``x_k = step(x_{k-1}, u_{k-1}, d_{k-1})``, ``y_k = output_map(x_k)``.

    ``step`` works on raw float64 arrays and must not mutate its arguments.
    """

    step: StepFn = None
    output_map: Callable[[np.ndarray], np.ndarray] = field(default=_no_outputs)
    dt: float = 1e-3

    def __post_init__(self):
        super().__post_init__()
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}", field=f"{self.id}.dt")
        if self.step is None:
            raise ConfigError("step function required", field=self.id)


def discretize_euler(model: ContinuousModel, dt: float) -> SubsystemModel:
    """Forward-Euler discretization ``x + dt * f(x, u, d)``."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be positive, got {dt!r}", field="dt")
    f = model.derivative

    def step(x, u, d):
        return x + dt * f(x, u, d)

    return SubsystemModel(
        id=model.id,
        states=model.states,
        controls=model.controls,
        disturbances=model.disturbances,
        outputs=model.outputs,
        step=step,
        output_map=getattr(model, "output_map", _no_outputs),
        dt=dt,
    )


def as_array(v, n: int, what: str) -> np.ndarray:
    """Coerce ``v`` to a float64 vector of length ``n`` (copy, caller-safe)."""
    if isinstance(v, StateVector):
        v = v.values
    arr = np.array(v, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n:
        raise UsageError(f"{what} has length {arr.shape[0]}, expected {n}")
    return arr


def check_finite(x: np.ndarray, names: Sequence[str], step=None):
    """Raise :class:`DivergenceError` naming the first non-finite entry."""
    if not np.all(np.isfinite(x)):
        i = int(np.flatnonzero(~np.isfinite(x))[0])
        raise DivergenceError(names[i], step=step, value=float(x[i]))


def eval_step(model, x, u, d) -> StateVector:
    """Advance ``model`` one step from ``(x, u, d)``.

    Works for any object exposing ``step``, ``state_names``, ``n_states``,
    ``control_names`` and ``disturbance_names`` (subsystems and coupled
    systems alike).  A non-finite result raises :class:`DivergenceError`.
    """
    xa = as_array(x, model.n_states, "x")
    ua = as_array(u, len(model.control_names), "u")
    da = as_array(d, len(model.disturbance_names), "d")
    with np.errstate(all="ignore"):
        nxt = np.asarray(model.step(xa, ua, da), dtype=np.float64)
    if nxt.shape != xa.shape:
        raise UsageError(f"step returned shape {nxt.shape}, expected {xa.shape}")
    check_finite(nxt, model.state_names)
    return StateVector(nxt, model.state_names)
