"""Fixed points ``F(x, u, d) = x`` by damped Newton with a simulation warm start."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, NumericalError
from ..model import StateVector
from .linearize import DEFAULT_EPS, state_jacobian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquilibriumOptions:
    tol: float = 1e-9
    max_iter: int = 100
    max_halvings: int = 30
    eps: float = DEFAULT_EPS
    warmup_steps: int = 0          # simulation pre-roll used when Newton fails
    rank_rtol: float = 1e-14


@dataclass(frozen=True)
class EquilibriumResult:
    x_bar: StateVector
    u_bar: np.ndarray
    d_bar: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    message: str = ""
    null_direction: np.ndarray = None

    @property
    def x(self) -> np.ndarray:
        return np.array(self.x_bar.values)


def _names(F, n):
    names = getattr(F, "state_names", None)
    return tuple(names) if names is not None else tuple(f"x{i}" for i in range(n))


def _newton(step, x, u, d, opts, it0=0):
    """Returns (x, residual, iterations, message, null_direction)."""
    n = x.size
    eye = np.eye(n)

    def G(z):
        # a model that cannot be evaluated at a trial point fails the trial
        try:
            with np.errstate(all="ignore"):
                return np.asarray(step(z, u, d), dtype=np.float64) - z
        except ArithmeticError:
            return np.full(n, np.inf)

    g = G(x)
    if not np.all(np.isfinite(g)):
        return x, np.inf, it0, "residual not finite at the initial guess", None
    res = float(np.max(np.abs(g)))
    it = it0
    while it < opts.max_iter:
        if res < opts.tol:
            return x, res, it, "converged", None
        it += 1
        try:
            J = state_jacobian(step, x, u, d, opts.eps) - eye
        except NumericalError as exc:
            return x, res, it, f"jacobian failed: {exc}", None
        s = np.linalg.svd(J, compute_uv=False)
        # A - I is O(1) for the maps handled here, so the scale has a floor of 1
        if s[-1] <= opts.rank_rtol * max(s[0], 1.0):
            _, _, vt = np.linalg.svd(J)
            return x, res, it, "singular fixed-point jacobian", vt[-1]
        dx = np.linalg.solve(J, -g)
        merit = float(np.dot(g, g))
        alpha = 1.0
        for _ in range(opts.max_halvings + 1):
            x_try = x + alpha * dx
            g_try = G(x_try)
            if np.all(np.isfinite(g_try)) and float(np.dot(g_try, g_try)) < merit:
                break
            alpha *= 0.5
        else:
            return x, res, it, "line search failed", None
        x, g = x_try, g_try
        res = float(np.max(np.abs(g)))
    if res < opts.tol:
        return x, res, it, "converged", None
    return x, res, it, "iteration limit reached", None


def find_equilibrium(F, x0, u_bar, d_bar, options: EquilibriumOptions = None) -> EquilibriumResult:
    """Solve ``G(x) = F(x, u_bar, d_bar) - x = 0``.

    Newton steps use the finite-difference Jacobian ``A - I`` and are halved
    until the squared residual decreases.  If Newton does not converge and
    ``options.warmup_steps`` is positive, the system is first simulated from
    ``x0`` for that many steps and Newton restarts from the end point.
    Non-convergence is reported in the result, not raised.
    """
    opts = options or EquilibriumOptions()
    step = getattr(F, "step", F)
    x = np.array(x0, dtype=np.float64).reshape(-1)
    u = np.asarray(u_bar, dtype=np.float64)
    d = np.asarray(d_bar, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericalError("initial guess is not finite")

    best = _newton(step, x, u, d, opts)
    if best[3] != "converged" and opts.warmup_steps > 0:
        log.info("newton from initial guess: %s; simulating %d steps", best[3], opts.warmup_steps)
        z = x.copy()
        try:
            with np.errstate(all="ignore"):
                for k in range(opts.warmup_steps):
                    z = np.asarray(step(z, u, d), dtype=np.float64)
                    if not np.all(np.isfinite(z)):
                        raise DivergenceError("warmup", step=k)
        except DivergenceError:
            z = None
        if z is not None:
            second = _newton(step, z, u, d, opts, it0=best[2])
            if second[1] < best[1] or second[3] == "converged":
                best = second
    x, res, it, msg, null = best
    names = _names(F, x.size)
    return EquilibriumResult(
        x_bar=StateVector(x, names) if np.all(np.isfinite(x)) else StateVector(np.zeros_like(x), names),
        u_bar=u.copy(), d_bar=d.copy(), residual_norm=res, iterations=it,
        converged=msg == "converged", message=msg, null_direction=null)
