"""Deterministic CSV output.

Floats are written with 17 significant digits (enough to round-trip a
double), rows end in ``\\n`` and nothing time-dependent is written.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

EQUILIBRIUM_HEADER = ("signal", "value", "unit")
EIGENVALUE_HEADER = ("re", "im", "magnitude", "index")
SWEEP_HEADER = ("gamma", "spectral_radius", "n_outside", "converged")
SWEEP_EIGEN_HEADER = ("gamma", "index", "re", "im", "magnitude")
SINGULAR_HEADER = ("index", "singular_value")
SUMMARY_HEADER = ("quantity", "value")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return format(f, ".17g")
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def equilibrium_rows(names, values, units):
    return [(n, float(v), u) for n, v, u in zip(names, values, units)]


def eigenvalue_rows(eigenvalues):
    return [(float(e.real), float(e.imag), float(abs(e)), i) for i, e in enumerate(eigenvalues)]


def sweep_rows(rows):
    return [(r.gamma, r.spectral_radius, r.n_outside, r.converged) for r in rows]


def sweep_eigen_rows(rows):
    out = []
    for r in rows:
        for i, e in enumerate(r.eigenvalues):
            out.append((r.gamma, i, float(e.real), float(e.imag), float(abs(e))))
    return out


def trajectory_header(traj):
    return ("step", "time_s") + traj.state_names + traj.coupled_names


def trajectory_rows(traj):
    for k, x, c in zip(traj.steps, traj.states, traj.couplings):
        yield (int(k), float(k) * traj.dt, *x.tolist(), *c.tolist())
