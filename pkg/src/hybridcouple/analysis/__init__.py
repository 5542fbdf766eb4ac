"""Equilibrium, stability, Lyapunov, controllability, sweeps and simulation."""

from .controllability import (ControllabilityReport, controllability_matrix, controllability_rank,
                              pbh_rank, pbh_uncontrollable)
from .equilibrium import EquilibriumOptions, EquilibriumResult, find_equilibrium
from .linearize import LinearizedSystem, jacobian_fd, state_jacobian
from .lyapunov import (LyapunovResult, SampledDecrease, lyapunov_quadratic, sampled_decrease,
                       solve_discrete_lyapunov)
from .simulate import Trajectory, modal_growth_rate, perturbation, scaled_deviation, simulate
from .stability import StabilityReport, classify, eigen_report, stability_local
from .sweep import SweepRow, gamma_sweep, pair_eigenvalues, stability_crossings

__all__ = [
    "ControllabilityReport", "controllability_matrix", "controllability_rank", "pbh_rank",
    "pbh_uncontrollable", "EquilibriumOptions", "EquilibriumResult", "find_equilibrium",
    "LinearizedSystem", "jacobian_fd", "state_jacobian", "LyapunovResult", "SampledDecrease",
    "lyapunov_quadratic", "sampled_decrease", "solve_discrete_lyapunov", "Trajectory",
    "modal_growth_rate", "perturbation", "scaled_deviation", "simulate", "StabilityReport",
    "classify", "eigen_report", "stability_local", "SweepRow", "gamma_sweep", "pair_eigenvalues",
    "stability_crossings",
]
