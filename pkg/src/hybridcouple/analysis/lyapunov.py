"""Quadratic Lyapunov certificates for a linearized discrete-time map.

``P`` solves ``A^T P A - P = -I``.  The equation is linear in the entries
of ``P``; with column-major vectorization it reads

    (kron(A^T, A^T) - I) vec(P) = -vec(I)

which is solved densely (n^2 unknowns).  A solution exists and is unique
unless some eigenvalue product ``lambda_i * lambda_j`` equals one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

DEFAULT_SAMPLES = 10_000
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class SampledDecrease:
    """Outcome of the sampled check ``V(F(x)) - V(x) < 0`` around ``x_bar``.

    ``radius`` is the largest tested radius at which every sample decreased
    (0.0 when none did), in units of ``max(1, |x_bar_i|)`` per state.
    """
    radius: float
    samples: int
    tested: tuple          # ((radius, n_fail), ...) in test order
    worst_increase: float  # max of V(F(x)) - V(x) at the first radius tested


@dataclass(frozen=True)
class LyapunovResult:
    status: str                      # "certified", "not-positive-definite" or "marginal"
    P: np.ndarray = None
    min_eigenvalue: float = float("nan")
    residual: float = float("nan")   # ||A^T P A - P + I||_max
    sampled: SampledDecrease = None

    @property
    def certified(self):
        return self.status == "certified"


def _square(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"A must be square, got shape {A.shape}")
    return A


def solve_discrete_lyapunov(A, Q=None):
    """``P`` with ``A^T P A - P = -Q`` (``Q`` defaults to the identity)."""
    A = _square(A)
    n = A.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=np.float64)
    M = np.kron(A.T, A.T) - np.eye(n * n)
    p = np.linalg.solve(M, -Q.reshape(-1, order="F"))
    P = p.reshape((n, n), order="F")
    return 0.5 * (P + P.T)


def lyapunov_quadratic(A, singular_tol: float = SINGULAR_TOL) -> LyapunovResult:
    """Solve for ``P`` and test it for positive definiteness."""
    A = _square(A)
    ev = np.linalg.eigvals(A)
    prod = np.outer(ev, ev)
    if ev.size and float(np.min(np.abs(1.0 - prod))) <= singular_tol:
        return LyapunovResult("marginal")
    try:
        P = solve_discrete_lyapunov(A)
    except np.linalg.LinAlgError:
        return LyapunovResult("marginal")
    n = A.shape[0]
    resid = float(np.max(np.abs(A.T @ P @ A - P + np.eye(n)))) if n else 0.0
    min_eig = float(np.linalg.eigvalsh(P).min()) if n else float("inf")
    try:
        np.linalg.cholesky(P)
        status = "certified"
    except np.linalg.LinAlgError:
        status = "not-positive-definite"
    return LyapunovResult(status, P, min_eig, resid)


def sampled_decrease(F, P, x_bar, u_bar, d_bar, radius: float, samples: int = DEFAULT_SAMPLES,
                     seed: int = 0, max_halvings: int = 12) -> SampledDecrease:
    """Estimate a neighbourhood where ``V(x) = dx^T P dx`` decreases along ``F``.

    Points are drawn uniformly on the sphere of the given radius in scaled
    coordinates; the radius is halved until every sample decreases or
    ``max_halvings`` is exhausted.
    """
    step = getattr(F, "step", F)
    x_bar = np.asarray(x_bar, dtype=np.float64)
    u = np.asarray(u_bar, dtype=np.float64)
    d = np.asarray(d_bar, dtype=np.float64)
    scale = np.maximum(1.0, np.abs(x_bar))
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, x_bar.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    tested = []
    worst = None
    r = float(radius)
    for _ in range(max_halvings + 1):
        n_fail = 0
        top = -np.inf
        with np.errstate(all="ignore"):
            for v in dirs:
                dx = r * scale * v
                dx_next = np.asarray(step(x_bar + dx, u, d), dtype=np.float64) - x_bar
                dv = dx_next @ P @ dx_next - dx @ P @ dx
                if not dv < 0.0:
                    n_fail += 1
                top = max(top, dv)
        if worst is None:
            worst = float(top)
        tested.append((r, n_fail))
        if n_fail == 0:
            return SampledDecrease(r, samples, tuple(tested), worst)
        r *= 0.5
    return SampledDecrease(0.0, samples, tuple(tested), worst)
