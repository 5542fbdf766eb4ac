"""Single-diode photovoltaic panel model.

Panel constants default to a published single-diode fit of the Kyocera
KC200GT data sheet (54 series cells, ideality 1.3).  The
implicit current equation

    I = Ipv - I0 * (exp((V + Rs*I) / (a*Vt)) - 1) - (V + Rs*I) / Rp

is strictly decreasing in I, so it has exactly one root for every (V, T, G).
It is solved with a safeguarded Newton iteration (see :func:`solve_current`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ConfigError, NumericalError

BOLTZMANN = 1.380649e-23
ELECTRON_CHARGE = 1.602176634e-19
KELVIN_OFFSET = 273.15

_EXP_CLAMP = 700.0


def _exp(z):
    return math.exp(z if z < _EXP_CLAMP else _EXP_CLAMP)


@dataclass(frozen=True)
class DiodeParams:
    isc_n: float = 8.21          # A, short-circuit current at STC
    voc_n: float = 32.9          # V, open-circuit voltage at STC
    ipv_n: float = 8.214         # A, photocurrent at STC
    k_i: float = 0.0032          # A/K
    k_v: float = -0.123          # V/K
    n_cells: int = 54
    ideality: float = 1.3
    r_s: float = 0.221           # ohm
    r_p: float = 415.405         # ohm
    g_n: float = 1000.0          # W/m^2
    t_n: float = 298.15          # K

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("k_i", "k_v"):
                continue
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"must be positive, got {v!r}", field=f"pv.diode.{f.name}")


@dataclass(frozen=True)
class DiodeTerms:
    """Temperature/irradiance dependent constants of the implicit equation."""
    photocurrent: float
    saturation_current: float
    n_vt: float      # a * Ns * k T / q
    r_s: float
    r_p: float


def diode_terms(p: DiodeParams, t_pv_c: float, g: float) -> DiodeTerms:
    t_k = t_pv_c + KELVIN_OFFSET
    dt = t_k - p.t_n
    voc_t = p.voc_n + p.k_v * dt
    if t_k <= 0.0 or voc_t <= 0.0 or not math.isfinite(t_k):
        raise NumericalError(f"cell temperature {t_pv_c!r} degC outside the diode model's range")
    n_vt = p.ideality * p.n_cells * BOLTZMANN * t_k / ELECTRON_CHARGE
    iph = (p.ipv_n + p.k_i * dt) * g / p.g_n
    i0 = (p.isc_n + p.k_i * dt) / math.expm1(voc_t / n_vt)
    return DiodeTerms(iph, i0, n_vt, p.r_s, p.r_p)


def _residual(t: DiodeTerms, v, vd):
    """Current balance at junction voltage ``vd`` for terminal voltage ``v``."""
    e = _exp(vd / t.n_vt)
    h = t.photocurrent - t.saturation_current * (e - 1.0) - vd / t.r_p - (vd - v) / t.r_s
    dh = -t.saturation_current * e / t.n_vt - 1.0 / t.r_p - 1.0 / t.r_s
    return h, dh


def solve_current(t: DiodeTerms, v: float, tol: float = 1e-10, max_iter: int = 100) -> float:
    """Panel current at terminal voltage ``v`` for precomputed diode terms.

    Iterates on the junction voltage ``vd = v + Rs*I``; the balance is
    concave and decreasing in ``vd``.  Upward Newton steps are limited to
    ``2 n Vt`` (junction-voltage limiting) so a guess below the root cannot
    jump deep into the exponential, and any step leaving the known bracket
    is replaced by bisection.
    """
    if t.photocurrent > 0.0:
        voc_est = t.n_vt * math.log1p(t.photocurrent / t.saturation_current)
    else:
        voc_est = 0.0
    vd = min(v + t.r_s * t.photocurrent, voc_est) if v > 0.0 else v + t.r_s * t.photocurrent
    lo = hi = None
    limit = 2.0 * t.n_vt
    for _ in range(max_iter):
        h, dh = _residual(t, v, vd)
        if h > 0.0:
            lo = vd
        elif h < 0.0:
            hi = vd
        else:
            return (vd - v) / t.r_s
        step = -h / dh
        if step > limit:
            step = limit
        nxt = vd + step
        if lo is not None and hi is not None and not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        step, vd = nxt - vd, nxt
        if abs(step) <= 1e-13 * max(1.0, abs(vd)) or (
                abs(step) <= tol * t.r_s * 1e-3 and abs(_residual(t, v, vd)[0]) <= tol):
            return (vd - v) / t.r_s
    h, _ = _residual(t, v, vd)
    if abs(h) <= tol:
        return (vd - v) / t.r_s
    raise NumericalError(f"single-diode solve did not converge at V={v!r}", residual=h)


def panel_current(p: DiodeParams, v: float, t_pv_c: float, g: float, tol: float = 1e-10) -> float:
    """Current of one panel [A] at voltage ``v`` [V], cell temperature
    ``t_pv_c`` [degC] and irradiance ``g`` [W/m^2]."""
    return solve_current(diode_terms(p, t_pv_c, g), v, tol)


def bisect_current(p: DiodeParams, v: float, t_pv_c: float, g: float, tol: float = 1e-13) -> float:
    """Plain bisection on the same implicit equation; slow reference solver."""
    t = diode_terms(p, t_pv_c, g)

    def balance(i):
        vd = v + t.r_s * i
        return t.photocurrent - t.saturation_current * math.expm1(vd / t.n_vt) - vd / t.r_p - i

    lo, hi = -1.0, 1.0
    while balance(lo) <= 0.0:
        lo *= 2.0
    while balance(hi) >= 0.0:
        hi *= 2.0
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if balance(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
