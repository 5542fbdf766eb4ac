"""Fixed-step simulation of a (coupled) discrete-time model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, UsageError
from ..model import as_array


@dataclass(frozen=True)
class Trajectory:
    """Recorded states and coupled inputs.

    Row ``j`` of ``states`` is the state after ``steps[j]`` steps; row ``j``
    of ``couplings`` holds the coupled inputs evaluated at that state.
    """
    steps: np.ndarray
    states: np.ndarray
    couplings: np.ndarray
    state_names: tuple
    state_units: tuple
    coupled_names: tuple
    dt: float
    diverged: bool = False
    stop_step: int = None
    reason: str = ""

    @property
    def times(self):
        return self.steps * self.dt

    @property
    def final(self):
        return self.states[-1]

    def column(self, name):
        if name in self.state_names:
            return self.states[:, self.state_names.index(name)]
        return self.couplings[:, self.coupled_names.index(name)]


def _schedule(v, n, steps, what):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim <= 1:
        a = as_array(arr, n, what)
        return lambda k: a
    if arr.ndim != 2 or arr.shape[1] != n or arr.shape[0] < steps:
        raise UsageError(f"{what} sequence must have shape ({steps}, {n}), got {arr.shape}")
    arr = np.ascontiguousarray(arr)
    return lambda k: arr[k]


def simulate(sys, x0, u, d, steps: int, record_every: int = 1) -> Trajectory:
    """Iterate ``sys.step`` for ``steps`` steps from ``x0``.

    ``u`` and ``d`` are constant vectors or ``(steps, m)`` sequences.  A
    non-finite state, or a model evaluation that fails, ends the run early;
    the partial trajectory is returned with ``diverged`` set.
    """
    if steps < 1:
        raise UsageError(f"steps must be >= 1, got {steps}")
    if record_every < 1:
        raise UsageError(f"record_every must be >= 1, got {record_every}")
    names = tuple(sys.state_names)
    units = tuple(getattr(sys, "state_units", ("",) * len(names)))
    coupled = tuple(getattr(sys, "coupled_names", ()))
    advance = getattr(sys, "advance", None)
    if advance is None:
        advance = lambda x, uu, dd: (sys.step(x, uu, dd), ())
    u_at = _schedule(u, len(sys.control_names), steps, "u")
    d_at = _schedule(d, len(sys.disturbance_names), steps, "d")
    x = as_array(x0, sys.n_states, "x0")

    rec_k, rec_x, rec_c = [], [], []
    diverged, stop, reason = False, None, ""
    with np.errstate(all="ignore"):
        k = 0
        while True:
            last = k == steps
            uk, dk = u_at(min(k, steps - 1)), d_at(min(k, steps - 1))
            try:
                nxt, cv = advance(x, uk, dk)
            except ArithmeticError as exc:
                if last:
                    # the final state is valid; only its couplings are not
                    nxt, cv = x, (np.nan,) * len(coupled)
                else:
                    diverged, stop, reason = True, k, str(exc)
                    nxt = None
                    cv = (np.nan,) * len(coupled)
            if last or k % record_every == 0 or diverged:
                rec_k.append(k)
                rec_x.append(x)
                rec_c.append(cv)
            if last or diverged:
                break
            if not np.all(np.isfinite(nxt)):
                i = int(np.flatnonzero(~np.isfinite(nxt))[0])
                diverged, stop = True, k + 1
                reason = str(DivergenceError(names[i], step=k + 1, value=float(nxt[i])))
                break
            x = nxt
            k += 1
    return Trajectory(np.array(rec_k, dtype=np.int64), np.array(rec_x),
                      np.array(rec_c, dtype=np.float64).reshape(len(rec_k), len(coupled)),
                      names, units, coupled, float(getattr(sys, "dt", 1.0)),
                      diverged, stop, reason)


def perturbation(x_bar, rel: float, seed: int = 0) -> np.ndarray:
    """Random sign perturbation of size ``rel * max(1, |x_bar_i|)`` per state."""
    x_bar = np.asarray(x_bar, dtype=np.float64)
    rng = np.random.default_rng(seed)
    signs = rng.choice((-1.0, 1.0), size=x_bar.size)
    return rel * np.maximum(1.0, np.abs(x_bar)) * signs


def scaled_deviation(states, x_bar) -> np.ndarray:
    """Per-row Euclidean norm of ``(x - x_bar) / max(1, |x_bar|)``."""
    x_bar = np.asarray(x_bar, dtype=np.float64)
    return np.linalg.norm((np.atleast_2d(states) - x_bar) / np.maximum(1.0, np.abs(x_bar)), axis=1)


def modal_growth_rate(states, steps, x_bar, A) -> tuple:
    """Per-step growth of the dominant eigenmode along a trajectory.

    The deviation is projected on the left eigenvector of ``A`` belonging
    to its largest-magnitude eigenvalue; the rate is the geometric mean of
    the modal amplitude ratio between the first and last rows.  Returns
    ``(rate, eigenvalue)``.
    """
    ev, vl = np.linalg.eig(np.asarray(A).T)
    i = int(np.argmax(np.abs(ev)))
    w = vl[:, i]
    z = (np.atleast_2d(states) - np.asarray(x_bar)) @ w
    k = np.asarray(steps)
    span = k[-1] - k[0]
    if span <= 0 or abs(z[0]) == 0.0:
        raise UsageError("need two recorded rows and a nonzero initial modal amplitude")
    rate = (abs(z[-1]) / abs(z[0])) ** (1.0 / span)
    return float(rate), complex(ev[i])
