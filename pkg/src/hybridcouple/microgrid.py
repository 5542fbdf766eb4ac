"""Averaged equivalent-circuit model of the PV/battery microgrid.

Twelve states, in this order::

    SOC, q2_bat, I_L_sd, V_bat, V_c2_sd, T_pv, I_L_su, V_pv, V_c2_su,
    I_L1_bus, I_L2_bus, V_bus

controls ``[D_sd, D_su, D_load]`` and disturbances ``[G, T_inf, I_O, I_loss]``.
Temperatures are in degC; the diode model converts internally.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, UsageError
from .model import ContinuousModel, signals
from .pv import DiodeParams, panel_current

SOC_SOFT_RANGE = (-0.2, 1.2)
# Duty cycles within this distance of [0, 1] are used as given so that
# central finite differences at D = 0 or D = 1 stay two-sided.
DUTY_SLACK = 1e-5


class SocRangeWarning(UserWarning):
    pass


class DutyClampWarning(UserWarning):
    pass


# -- open-circuit voltage curves ---------------------------------------------

class PolynomialVoc:
    """Cell open-circuit voltage as a polynomial in SOC (ascending coefficients)."""

    def __init__(self, coeffs):
        self.coeffs = tuple(float(c) for c in coeffs)
        if not self.coeffs:
            raise ConfigError("empty polynomial", field="battery.voc")
        self._rev = self.coeffs[::-1]
        self._drev = tuple(c * k for k, c in enumerate(self.coeffs))[1:][::-1]

    def __call__(self, soc: float) -> float:
        acc = 0.0
        for c in self._rev:
            acc = acc * soc + c
        return acc

    def slope(self, soc: float) -> float:
        acc = 0.0
        for c in self._drev:
            acc = acc * soc + c
        return acc

    def is_monotone(self) -> bool:
        d = np.polynomial.Polynomial(self.coeffs).deriv()
        pts = [0.0, 1.0] + [r.real for r in d.roots() if abs(r.imag) < 1e-12 and 0 <= r.real <= 1]
        return all(d(s) >= -1e-12 for s in pts) and self(1.0) >= self(0.0)

    def __repr__(self):
        return f"PolynomialVoc({list(self.coeffs)})"


class TabulatedVoc:
    """Piecewise-linear curve through ``(soc, volts)`` breakpoints.

    Outside the table the end segments are extended linearly.
    """

    def __init__(self, soc, volts):
        self.soc = tuple(float(s) for s in soc)
        self.volts = tuple(float(v) for v in volts)
        if len(self.soc) != len(self.volts) or len(self.soc) < 2:
            raise ConfigError("need at least two (soc, volts) breakpoints", field="battery.voc")
        if any(b <= a for a, b in zip(self.soc, self.soc[1:])):
            raise ConfigError("breakpoint SOC values must be strictly increasing", field="battery.voc")

    @classmethod
    def from_file(cls, path):
        try:
            data = np.loadtxt(path, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read V_oc table {path}: {exc}", field="battery.voc_table") from exc
        if data.shape[1] != 2:
            raise ConfigError("V_oc table must have two columns (SOC, volts)", field="battery.voc_table")
        return cls(data[:, 0], data[:, 1])

    def _segment(self, soc):
        i = bisect.bisect_right(self.soc, soc) - 1
        return min(max(i, 0), len(self.soc) - 2)

    def __call__(self, soc: float) -> float:
        i = self._segment(soc)
        s0, s1 = self.soc[i], self.soc[i + 1]
        v0, v1 = self.volts[i], self.volts[i + 1]
        return v0 + (v1 - v0) * (soc - s0) / (s1 - s0)

    def slope(self, soc: float) -> float:
        i = self._segment(soc)
        return (self.volts[i + 1] - self.volts[i]) / (self.soc[i + 1] - self.soc[i])

    def is_monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.volts, self.volts[1:]))

    def __repr__(self):
        return f"TabulatedVoc({len(self.soc)} points)"


# Steep near empty, flat through mid-range, V_oc(0) = 3.0 V, V_oc(1) = 4.2 V.
# Derivative 4 - 12 s + 9.6 s^2 has no real root, so the cubic is monotone.
DEFAULT_VOC = PolynomialVoc((3.0, 4.0, -6.0, 3.2))


# -- parameter bundles ---------------------------------------------------------

def _require_positive(obj, section, skip=()):
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            continue
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"must be positive, got {v!r}", field=f"{section}.{f.name}")


@dataclass(frozen=True)
class BatteryParams:
    N_p: float = 400
    N_s: float = 100
    Q: float = 1.21          # Ah per cell
    C2: float = 15000.0
    R1: float = 0.0198
    R2: float = 0.2331
    voc_curve: object = DEFAULT_VOC
    capacity_in_coulombs: bool = True

    def __post_init__(self):
        _require_positive(self, "battery")
        if not self.voc_curve.is_monotone():
            raise ConfigError("V_oc curve must be non-decreasing on [0, 1]", field="battery.voc")

    @property
    def capacity(self) -> float:
        """Cell capacity in the unit dSOC/dt divides by (C, or Ah when raw)."""
        return self.Q * 3600.0 if self.capacity_in_coulombs else self.Q


@dataclass(frozen=True)
class ConverterParams:
    L: float = 1.0
    C1: float = 1000.0
    C2: float = 1000.0
    R1: float = 10000.0
    R2: float = 10000.0
    R3: float = 0.0050

    def __post_init__(self):
        _require_positive(self, "converter")


@dataclass(frozen=True)
class PvParams:
    N_p_pv: float = 100
    C_pv: float = 4580.0
    alpha: float = 0.7
    A_s: float = 0.8
    h: float = 13.39
    diode: DiodeParams = field(default_factory=DiodeParams)

    def __post_init__(self):
        _require_positive(self, "pv")
        if self.alpha > 1:
            raise ConfigError(f"absorptivity must be in (0, 1], got {self.alpha!r}", field="pv.alpha")


@dataclass(frozen=True)
class BusParams:
    L1: float = 1.0
    L2: float = 1.0
    C_bus: float = 100.0
    R1: float = 0.0001
    R2: float = 0.0001

    def __post_init__(self):
        _require_positive(self, "bus")


@dataclass(frozen=True)
class MicrogridParams:
    battery: BatteryParams = field(default_factory=BatteryParams)
    buck: ConverterParams = field(default_factory=ConverterParams)
    boost: ConverterParams = field(default_factory=ConverterParams)
    pv: PvParams = field(default_factory=PvParams)
    bus: BusParams = field(default_factory=BusParams)


# -- component blocks ----------------------------------------------------------

def _check_duty(d, name):
    if not (0.0 <= d <= 1.0):
        raise UsageError(f"duty cycle {name}={d!r} outside [0, 1]")


def battery_current(p: BatteryParams, soc, q2, v_bat):
    """Module current [A]; positive discharges the pack."""
    lo, hi = SOC_SOFT_RANGE
    if not (lo <= soc <= hi):
        warnings.warn("SOC outside [-0.2, 1.2]; V_oc curve is extrapolated", SocRangeWarning, stacklevel=2)
    return (p.N_p / p.R1) * (p.voc_curve(soc) + q2 / p.C2 - v_bat / p.N_s)


def battery_derivatives(p: BatteryParams, soc, q2, v_bat, i_bat=None):
    if i_bat is None:
        i_bat = battery_current(p, soc, q2, v_bat)
    d_soc = -i_bat / (p.N_p * p.capacity)
    d_q2 = -i_bat / p.N_p - q2 / (p.R2 * p.C2)
    return d_soc, d_q2


def buck_derivatives(p: ConverterParams, i_L, v_bat, v_c2, D_sd, i_bat, i_L2_bus):
    _check_duty(D_sd, "D_sd")
    return _buck(p, i_L, v_bat, v_c2, D_sd, i_bat, i_L2_bus)


def pv_current(p: PvParams, v_pv, t_pv, g):
    """Current of one panel [A]; ``t_pv`` in degC."""
    return panel_current(p.diode, v_pv, t_pv, g)


def pv_thermal_derivative(p: PvParams, t_pv, g, t_inf, v_pv, i_pv=None):
    if i_pv is None:
        i_pv = pv_current(p, v_pv, t_pv, g)
    return (p.alpha * p.A_s * g - p.h * p.A_s * (t_pv - t_inf) - v_pv * i_pv) / p.C_pv


def boost_derivatives(p: ConverterParams, pv: PvParams, i_L, v_pv, v_c2, D_su, g, t_pv,
                      i_L1_bus, i_pv=None):
    _check_duty(D_su, "D_su")
    if i_pv is None:
        i_pv = pv_current(pv, v_pv, t_pv, g)
    return _boost(p, pv, i_L, v_pv, v_c2, D_su, i_L1_bus, i_pv)


def bus_derivatives(p: BusParams, i_L1, i_L2, v_bus, v_c2_su, v_c2_sd, D_load, i_O, i_loss):
    _check_duty(D_load, "D_load")
    return _bus(p, i_L1, i_L2, v_bus, v_c2_su, v_c2_sd, D_load, i_O, i_loss)


# -- assembly ------------------------------------------------------------------

STATES = signals(
    "state",
    ("SOC", "dimensionless"), ("q2_bat", "C"), ("I_L_sd", "A"), ("V_bat", "V"),
    ("V_c2_sd", "V"), ("T_pv", "degC"), ("I_L_su", "A"), ("V_pv", "V"),
    ("V_c2_su", "V"), ("I_L1_bus", "A"), ("I_L2_bus", "A"), ("V_bus", "V"),
)
CONTROLS = signals("control", ("D_sd", "dimensionless"), ("D_su", "dimensionless"),
                   ("D_load", "dimensionless"))
DISTURBANCES = signals("disturbance", ("G", "W/m^2"), ("T_inf", "degC"),
                       ("I_O", "A"), ("I_loss", "A"))


def clamp_duty(d, name):
    if -DUTY_SLACK <= d <= 1.0 + DUTY_SLACK:
        return d
    warnings.warn(f"duty cycle {name} clamped to [0, 1]", DutyClampWarning, stacklevel=3)
    return min(max(d, 0.0), 1.0)


def build_microgrid(params: MicrogridParams = None, model_id: str = "mg") -> ContinuousModel:
    """Assemble the 12-state continuous microgrid model."""
    params = params or MicrogridParams()
    bat, buck, boost, pv, bus = params.battery, params.buck, params.boost, params.pv, params.bus
    diode = pv.diode

    def derivative(x, u, d):
        soc, q2, il_sd, v_bat, vc2_sd, t_pv, il_su, v_pv, vc2_su, il1, il2, v_bus = x.tolist()
        d_sd, d_su, d_load = u.tolist()
        g, t_inf, i_o, i_loss = d.tolist()
        d_sd = clamp_duty(d_sd, "D_sd")
        d_su = clamp_duty(d_su, "D_su")
        d_load = clamp_duty(d_load, "D_load")

        i_bat = battery_current(bat, soc, q2, v_bat)
        i_pv = panel_current(diode, v_pv, t_pv, g)

        f_soc, f_q2 = battery_derivatives(bat, soc, q2, v_bat, i_bat)
        f_ilsd, f_vbat, f_vc2sd = _buck(buck, il_sd, v_bat, vc2_sd, d_sd, i_bat, il2)
        f_tpv = pv_thermal_derivative(pv, t_pv, g, t_inf, v_pv, i_pv)
        f_ilsu, f_vpv, f_vc2su = _boost(boost, pv, il_su, v_pv, vc2_su, d_su, il1, i_pv)
        f_il1, f_il2, f_vbus = _bus(bus, il1, il2, v_bus, vc2_su, vc2_sd, d_load, i_o, i_loss)
        return np.array((f_soc, f_q2, f_ilsd, f_vbat, f_vc2sd, f_tpv,
                         f_ilsu, f_vpv, f_vc2su, f_il1, f_il2, f_vbus))

    return ContinuousModel(id=model_id, states=STATES, controls=CONTROLS,
                           disturbances=DISTURBANCES, derivative=derivative)


# Unchecked kernels; the assembled model applies its own duty-cycle policy.

def _buck(p, i_L, v_bat, v_c2, D, i_bat, i_L2):
    return ((D * v_bat - p.R3 * i_L - v_c2) / p.L,
            (i_bat - D * i_L - v_bat / p.R1) / p.C1,
            (i_L - i_L2 - v_c2 / p.R2) / p.C2)


def _boost(p, pv, i_L, v_pv, v_c2, D, i_L1, i_pv):
    return ((v_pv - p.R3 * i_L - D * v_c2) / p.L,
            (pv.N_p_pv * i_pv - i_L - v_pv / p.R1) / p.C1,
            (D * i_L - i_L1 - v_c2 / p.R2) / p.C2)


def _bus(p, i_L1, i_L2, v_bus, v_c2_su, v_c2_sd, D, i_O, i_loss):
    return ((v_c2_su - v_bus - p.R1 * i_L1) / p.L1,
            (v_c2_sd - v_bus - p.R2 * i_L2) / p.L2,
            (i_L1 + i_L2 - i_loss - D * i_O) / p.C_bus)
