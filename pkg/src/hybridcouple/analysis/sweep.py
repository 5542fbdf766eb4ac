"""Equilibrium and eigenvalue continuation in the coupling parameter gamma."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import NumericalError
from .equilibrium import EquilibriumOptions, find_equilibrium
from .linearize import DEFAULT_EPS, state_jacobian
from .stability import DEFAULT_TOL_MARGIN, eigen_report

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    converged: bool
    spectral_radius: float
    n_outside: int
    classification: str
    eigenvalues: np.ndarray       # paired with the previous converged row
    x_bar: np.ndarray
    residual: float
    message: str
    start: str                    # "warm" or "seed <i>"
    max_jump: float = float("nan")  # largest paired eigenvalue move from the previous converged row


def pair_eigenvalues(prev, cur):
    """Reorder ``cur`` so ``cur[i]`` is matched to ``prev[i]``.

    Matching minimises the total distance in the complex plane (a linear
    assignment), which is what nearest-neighbour tracking means when two
    eigenvalues are close to each other.
    """
    prev = np.asarray(prev)
    cur = np.asarray(cur)
    cost = np.abs(prev[:, None] - cur[None, :])
    rows, cols = linear_sum_assignment(cost)
    out = np.empty_like(cur)
    out[rows] = cur[cols]
    return out


def _scaled_distance(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def gamma_sweep(build: Callable[[float], object], gammas: Sequence[float], x0, u_bar, d_bar,
                options: EquilibriumOptions = None, seeds: Sequence = (),
                tol_margin: float = DEFAULT_TOL_MARGIN, eps: float = DEFAULT_EPS) -> list:
    """Sweep ``gammas`` in the given order.

    ``build(gamma)`` returns the composed system.  Each point starts Newton
    from the previous converged equilibrium (``x0`` for the first).  When
    that fails, every guess in ``seeds`` is tried and the converged result
    closest to the previous equilibrium is kept.  Failures are recorded in
    their row and the sweep continues.
    """
    opts = options or EquilibriumOptions()
    rows = []
    x_prev = np.asarray(x0, dtype=np.float64)
    ev_prev = None
    for g in gammas:
        g = float(g)
        sys = build(g)
        eq = find_equilibrium(sys, x_prev, u_bar, d_bar, opts)
        start = "warm"
        if not eq.converged and seeds:
            found = []
            for i, s in enumerate(seeds):
                r = find_equilibrium(sys, s, u_bar, d_bar, opts)
                if r.converged:
                    found.append((_scaled_distance(r.x, x_prev), i, r))
            if found:
                _, i, eq = min(found, key=lambda t: t[:2])
                start = f"seed {i}"
                log.info("gamma=%g: warm start failed, seed %d converged", g, i)
        if not eq.converged:
            n = x_prev.size
            rows.append(SweepRow(g, False, float("nan"), -1, "failed",
                                 np.full(n, np.nan, dtype=complex), eq.x, eq.residual_norm,
                                 eq.message, start))
            continue
        try:
            rep = eigen_report(state_jacobian(sys, eq.x, u_bar, d_bar, eps), tol_margin)
        except NumericalError as exc:
            rows.append(SweepRow(g, True, float("nan"), -1, "failed",
                                 np.full(x_prev.size, np.nan, dtype=complex), eq.x,
                                 eq.residual_norm, str(exc), start))
            continue
        ev = rep.eigenvalues
        jump = float("nan")
        if ev_prev is not None:
            ev = pair_eigenvalues(ev_prev, ev)
            jump = float(np.max(np.abs(ev - ev_prev)))
        rows.append(SweepRow(g, True, rep.spectral_radius, rep.n_outside, rep.classification,
                             ev, eq.x, eq.residual_norm, eq.message, start, jump))
        x_prev, ev_prev = eq.x, ev
    return rows


def stability_crossings(rows) -> list:
    """``(gamma_a, gamma_b)`` for adjacent converged rows whose class differs."""
    good = [r for r in rows if r.converged and r.classification != "failed"]
    return [(a.gamma, b.gamma) for a, b in zip(good, good[1:])
            if a.classification != b.classification]
