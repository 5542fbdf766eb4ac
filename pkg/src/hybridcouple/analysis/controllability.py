"""Controllability of a linearized pair (A, B)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


@dataclass(frozen=True)
class ControllabilityReport:
    rank: int
    n_states: int
    singular_values: np.ndarray
    threshold: float
    matrix: np.ndarray = None

    @property
    def full_rank(self):
        return self.rank == self.n_states

    @property
    def condition(self):
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return float("inf")
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def _pair(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise UsageError(f"incompatible shapes A {A.shape}, B {B.shape}")
    return A, B


def controllability_matrix(A, B) -> np.ndarray:
    """``[B, AB, ..., A^(n-1) B]`` built by repeated multiplication."""
    A, B = _pair(A, B)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _threshold(s, shape, abs_floor):
    tol = (s[0] if s.size else 0.0) * max(shape) * np.finfo(np.float64).eps
    return max(tol, abs_floor)


def controllability_rank(lin=None, A=None, B=None, abs_floor: float = 0.0) -> ControllabilityReport:
    """Numerical rank of the controllability matrix from its singular values.

    Accepts a :class:`LinearizedSystem` or explicit ``A``/``B``.  Singular
    values at or below ``max(sigma_max * max(shape) * eps, abs_floor)``
    count as zero.
    """
    if lin is not None:
        A, B = lin.A, lin.B
    A, B = _pair(A, B)
    C = controllability_matrix(A, B)
    s = np.linalg.svd(C, compute_uv=False) if C.size else np.zeros(0)
    thr = _threshold(s, C.shape, abs_floor)
    rank = int(np.count_nonzero(s > thr)) if s.size and s[0] > 0 else 0
    return ControllabilityReport(rank, A.shape[0], s, thr, C)


def pbh_uncontrollable(A, B, rtol: float = 1e-9):
    """Eigenvalues at which ``[lambda I - A, B]`` loses row rank.

    A singular value of the PBH matrix below ``rtol`` times its largest
    (with a floor of ``rtol``) counts as zero.
    """
    A, B = _pair(A, B)
    n = A.shape[0]
    out = []
    for lam in np.linalg.eigvals(A):
        M = np.hstack([lam * np.eye(n) - A, B.astype(np.complex128)])
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= rtol * max(1.0, s[0]):
            out.append(complex(lam))
    return out


def pbh_rank(A, B, rtol: float = 1e-9) -> int:
    """Controllable-subspace dimension predicted by the PBH test.

    Exact when ``A`` has distinct eigenvalues: each failing eigenvalue is one
    uncontrollable mode.
    """
    A, _ = _pair(A, B)
    return A.shape[0] - len(pbh_uncontrollable(A, B, rtol))
