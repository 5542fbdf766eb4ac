"""Waterfall ANN load model and its state-space realization.

The network maps delayed inputs ``u`` (cooling power, kW) and outputs ``y``
(mean rack temperature, degC) to the next output

    y_k = phi_1(y_{k-1}, u_{k-1}) + sum_{n>=2} phi_n(y_{k-n}, y_{k-n+1}, u_{k-n})

Only the neighbouring prior output cascades into each neuron, which is what
makes an N-state realization possible (:func:`realize_state_space`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, UsageError
from .model import SubsystemModel, signals

_EXP_CLAMP = 700.0


@dataclass(frozen=True)
class Activation:
    """Scalar neuron function with a fixed number of arguments."""

    kind: str
    arity: int
    params: tuple
    fn: Callable[..., float]

    def __call__(self, *sigma):
        if len(sigma) != self.arity:
            raise UsageError(f"{self.kind} activation takes {self.arity} arguments, got {len(sigma)}")
        return self.fn(*sigma)


def affine(weight: float, bias: float = 0.0, arity: int = 3) -> Activation:
    """``weight * sigma_1 + bias``; remaining arguments are ignored."""
    w, b = float(weight), float(bias)

    def fn(s1, *_):
        return w * s1 + b

    return Activation("affine", int(arity), (("weight", w), ("bias", b)), fn)


def waterfall_sigmoid(weight: float, gain: float = 0.5, offset: float = 10.0) -> Activation:
    """``weight * sigma_3 / (1 + exp(-gain * sigma_2 + offset))``.

    The exponent is clamped to +-700 so extreme solver probes cannot overflow.
    """
    w, k, c = float(weight), float(gain), float(offset)

    def fn(s1, s2, s3):
        z = -k * s2 + c
        if z > _EXP_CLAMP:
            z = _EXP_CLAMP
        elif z < -_EXP_CLAMP:
            z = -_EXP_CLAMP
        return w * s3 / (1.0 + math.exp(z))

    return Activation("waterfall-sigmoid", 3, (("weight", w), ("gain", k), ("offset", c)), fn)


ACTIVATIONS = {"affine": affine, "waterfall-sigmoid": waterfall_sigmoid}

_CALL = re.compile(r"^\s*([A-Za-z][\w-]*)\s*\((.*)\)\s*$")


def parse_activation(text: str) -> Activation:
    """Parse ``"kind(name=value, ...)"``, e.g. ``"affine(weight=1, bias=0.1, arity=2)"``."""
    m = _CALL.match(text)
    if not m or m.group(1) not in ACTIVATIONS:
        raise ConfigError(f"unknown activation spec {text!r}; expected one of {sorted(ACTIVATIONS)}")
    kwargs = {}
    for part in filter(None, (p.strip() for p in m.group(2).split(","))):
        key, sep, val = part.partition("=")
        if not sep:
            raise ConfigError(f"activation argument {part!r} must be name=value")
        try:
            kwargs[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"activation argument {part!r} is not numeric") from None
    try:
        return ACTIVATIONS[m.group(1)](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for {m.group(1)}: {exc}") from None


def format_activation(act: Activation) -> str:
    args = dict(act.params)
    if act.kind == "affine":
        args["arity"] = act.arity
    return f"{act.kind}(" + ", ".join(f"{k}={v!r}" for k, v in args.items()) + ")"


@dataclass(frozen=True)
class WannParams:
    activations: tuple
    dt: float = 0.001

    def __post_init__(self):
        acts = tuple(self.activations)
        object.__setattr__(self, "activations", acts)
        if not acts:
            raise ConfigError("at least one neuron required", field="wann.activations")
        if acts[0].arity != 2:
            raise ConfigError("phi1 must take 2 arguments", field="wann.phi1")
        for n, a in enumerate(acts[1:], start=2):
            if a.arity != 3:
                raise ConfigError(f"phi{n} must take 3 arguments", field=f"wann.phi{n}")
        for n, a in enumerate(acts, start=1):
            for name, v in a.params:
                if not math.isfinite(v):
                    raise ConfigError(f"{name} must be finite", field=f"wann.phi{n}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}", field="wann.dt")

    @property
    def N(self) -> int:
        return len(self.activations)

    @classmethod
    def from_weights(cls, w12=1.0, w21=-9.7182e-6, w32=-1.1106e-6,
                     b1=2.2213e-4, b2=2.7766e-5, dt=0.001):
        """The three-neuron network with its published weights."""
        return cls((affine(w12, b1, arity=2), waterfall_sigmoid(w21), affine(w32, b2, arity=3)), dt)


DEFAULT_WANN = WannParams.from_weights()


def activation(p: WannParams, n: int, *sigma) -> float:
    """Evaluate neuron ``n`` (1-based)."""
    if not 1 <= n <= p.N:
        raise UsageError(f"neuron index {n} outside 1..{p.N}")
    return p.activations[n - 1](*sigma)


@dataclass(frozen=True)
class DelayHistory:
    """``past_outputs = [y_{k-1}, ..., y_{k-N}]``, ``past_inputs = [u_{k-1}, ..., u_{k-N}]``."""

    past_outputs: tuple
    past_inputs: tuple

    def __post_init__(self):
        y = tuple(float(v) for v in self.past_outputs)
        u = tuple(float(v) for v in self.past_inputs)
        if len(y) != len(u):
            raise UsageError("output and input histories differ in length")
        if not all(map(math.isfinite, y + u)):
            raise UsageError("history must be finite")
        object.__setattr__(self, "past_outputs", y)
        object.__setattr__(self, "past_inputs", u)

    def shifted(self, y_new: float, u_new: float) -> "DelayHistory":
        return DelayHistory((y_new,) + self.past_outputs[:-1], (u_new,) + self.past_inputs[:-1])


def _check_history(p, h):
    if len(h.past_outputs) != p.N:
        raise UsageError(f"history length {len(h.past_outputs)} != N = {p.N}")


def narma_eval(p: WannParams, h: DelayHistory) -> float:
    """Next output ``y_k`` straight from the input-output form."""
    _check_history(p, h)
    y, u = h.past_outputs, h.past_inputs
    acts = p.activations
    total = acts[0].fn(y[0], u[0])
    for n in range(2, p.N + 1):
        total += acts[n - 1].fn(y[n - 1], y[n - 2], u[n - 1])
    return total


def narma_simulate(p: WannParams, h: DelayHistory, inputs: Sequence[float]) -> np.ndarray:
    """Outputs ``[y_k, y_{k+1}, ...]`` for future inputs ``[u_k, u_{k+1}, ...]``.

    Returns ``len(inputs) + 1`` values; the first needs no future input.
    """
    out = [narma_eval(p, h)]
    for u in inputs:
        h = h.shifted(out[-1], u)
        out.append(narma_eval(p, h))
    return np.array(out)


STATE_UNIT = "degC"


def realize_state_space(p: WannParams = DEFAULT_WANN, model_id: str = "dc") -> SubsystemModel:
    """N-state discrete realization with ``y = x_1``.

    x_1' = x_2 + phi_1(x_1, u)
    x_n' = x_{n+1} + phi_n(x_1, x_2 + phi_1(x_1, u), u),   1 < n < N
    x_N' = phi_N(x_1, x_2 + phi_1(x_1, u), u)
    """
    acts = tuple(a.fn for a in p.activations)
    N = p.N
    phi1, rest = acts[0], acts[1:]

    def step(x, u, d):
        xs = x.tolist()
        ud = float(u[0])
        f1 = phi1(xs[0], ud)
        if N == 1:
            return np.array((f1,))
        x1 = xs[0]
        carry = xs[1] + f1
        nxt = [carry]
        for n in range(1, N - 1):
            nxt.append(xs[n + 1] + rest[n - 1](x1, carry, ud))
        nxt.append(rest[-1](x1, carry, ud))
        return np.array(nxt)

    def output_map(x):
        return np.array((x[0],))

    return SubsystemModel(
        id=model_id,
        states=signals("state", *[(f"x_DC{n}", STATE_UNIT) for n in range(1, N + 1)]),
        controls=signals("control", ("u_DC", "kW")),
        outputs=signals("output", ("y_DC", "degC")),
        step=step,
        output_map=output_map,
        dt=p.dt,
    )


def init_from_history(p: WannParams, h: DelayHistory) -> np.ndarray:
    """Realization state at time k consistent with the delay history.

    The returned state's output ``x_1`` is ``narma_eval(p, h)``; stepping it
    with ``u_k, u_{k+1}, ...`` reproduces the NARMA outputs that follow.
    """
    _check_history(p, h)
    N = p.N
    y_k = narma_eval(p, h)
    # y[j] = y_{k-j}, u[j] = u_{k-j}
    y = (y_k,) + h.past_outputs
    u = (None,) + h.past_inputs
    acts = p.activations
    x = [y_k]
    for n in range(2, N + 1):
        total = 0.0
        for m in range(n, N + 1):
            lag = m - n
            total += acts[m - 1].fn(y[lag + 1], y[lag], u[lag + 1])
        x.append(total)
    return np.array(x)


def wann_equilibrium(p: WannParams, u_dc: float, y_guess: float = 20.0,
                     tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Fixed point of the realization under constant input ``u_dc``.

    At a fixed point every delayed output equals ``y``, so ``y`` solves the
    scalar equation ``sum_n phi_n(y, y, u) - y = 0`` (phi_1 receives (y, u));
    the remaining states follow from the realization's shift structure.
    """
    acts = p.activations

    def g(yv):
        total = acts[0].fn(yv, u_dc) - yv
        for a in acts[1:]:
            total += a.fn(yv, yv, u_dc)
        return total

    yv, h = float(y_guess), 1e-6
    for _ in range(max_iter):
        gv = g(yv)
        dg = (g(yv + h) - g(yv - h)) / (2 * h)
        if dg == 0.0:
            break
        step = gv / dg
        yv -= step
        if abs(step) <= tol * max(1.0, abs(yv)):
            break
    hist = DelayHistory((yv,) * p.N, (u_dc,) * p.N)
    return init_from_history(p, hist)
