"""Central finite-difference linearization of a discrete-time map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class LinearizedSystem:
    A: np.ndarray      # dF/dx
    B: np.ndarray      # dF/du

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]


def _stepper(F):
    return getattr(F, "step", F)


def _columns(f, z, eps, what):
    z = np.asarray(z, dtype=np.float64)
    cols = []
    with np.errstate(all="ignore"):
        for j in range(z.size):
            h = eps * max(1.0, abs(z[j]))
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            # the step actually representable in floating point
            h2 = zp[j] - zm[j]
            fp, fm = f(zp), f(zm)
            col = (fp - fm) / h2
            if not np.all(np.isfinite(col)):
                raise NumericalError(f"non-finite map value while probing {what} column {j}")
            cols.append(col)
    return np.column_stack(cols) if cols else None


def jacobian_fd(F, x_bar, u_bar, d_bar, eps: float = DEFAULT_EPS) -> LinearizedSystem:
    """``A = dF/dx`` and ``B = dF/du`` at ``(x_bar, u_bar, d_bar)``.

    Each column uses a central difference with step ``eps * max(1, |z_j|)``.
    ``F`` is a step callable ``F(x, u, d)`` or any model with a ``step``.
    """
    step = _stepper(F)
    x = np.asarray(x_bar, dtype=np.float64)
    u = np.asarray(u_bar, dtype=np.float64)
    d = np.asarray(d_bar, dtype=np.float64)
    A = _columns(lambda z: np.asarray(step(z, u, d), dtype=np.float64), x, eps, "state")
    B = _columns(lambda z: np.asarray(step(x, z, d), dtype=np.float64), u, eps, "input")
    if B is None:
        B = np.zeros((x.size, 0))
    return LinearizedSystem(A, B)


def state_jacobian(F, x_bar, u_bar, d_bar, eps: float = DEFAULT_EPS) -> np.ndarray:
    step = _stepper(F)
    u = np.asarray(u_bar, dtype=np.float64)
    d = np.asarray(d_bar, dtype=np.float64)
    return _columns(lambda z: np.asarray(step(z, u, d), dtype=np.float64),
                    np.asarray(x_bar, dtype=np.float64), eps, "state")
