"""Scenario files: parameters, free variables and analysis settings.

A scenario is either ``coupled`` (subsystems joined by the ``[terms]``
section) or ``uncoupled`` (no terms; the inputs a coupling would supply
are given as free variables).  Every key is checked against a fixed
schema.  Keys left out take their documented default and are listed in
:attr:`Scenario.defaults_applied`.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import config
from .coupling import CouplingParams, LinearH, TabulatedH, compose
from .errors import ConfigError
from .microgrid import (BatteryParams, BusParams, ConverterParams, MicrogridParams, PolynomialVoc,
                        PvParams, TabulatedVoc, build_microgrid)
from .model import discretize_euler
from .pv import DiodeParams
from .wann import DEFAULT_WANN, WannParams, format_activation, parse_activation, realize_state_space, wann_equilibrium
from .analysis.equilibrium import EquilibriumOptions

REQUIRED = object()
SHIPPED = ("case_a", "case_b", "uncoupled")

MG_ID, DC_ID = "mg", "dc"
MG_CONTROLS = ("D_sd", "D_su", "D_load")
MG_FREE_DISTURBANCES = ("G", "T_inf")
COUPLABLE = {"I_O": "mg.I_O", "I_loss": "mg.I_loss", "u_DC": "dc.u_DC"}


def _fields_schema(cls, skip=()):
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            out[f.name] = ("bool", default)
        elif isinstance(default, (int, float)):
            out[f.name] = ("float", float(default))
    return out


SCHEMA = {
    "scenario": {"name": ("word", ""), "mode": ("word", REQUIRED), "dt": ("float", 0.001)},
    "free": {"u": ("floats", REQUIRED), "d": ("floats", REQUIRED),
             "I_O": ("float", None), "I_loss": ("float", None), "u_DC": ("float", None)},
    "battery": {**_fields_schema(BatteryParams),
                "voc": ("word", "poly"), "voc_poly": ("floats", (3.0, 4.0, -6.0, 3.2)),
                "voc_table": ("string", None)},
    "buck": _fields_schema(ConverterParams),
    "boost": _fields_schema(ConverterParams),
    "pv": _fields_schema(PvParams),
    "pv.diode": _fields_schema(DiodeParams),
    "bus": _fields_schema(BusParams),
    "wann": {},                       # phi1..phiN, see _wann
    "coupling": {"COP": ("float", 3.5), "R_DC": ("float", 3.7), "H": ("word", "linear"),
                 "H0": ("float", LinearH.H0), "gamma": ("float", LinearH.gamma),
                 "T_ref": ("float", LinearH.T_ref), "H_table": ("string", None)},
    "terms": {},                      # receiver = "expression"
    "equilibrium": {"v_bus_guess": ("float", 170.0), "seeds": ("floats", None),
                    "tol": ("float", 1e-9), "max_iter": ("int", 100), "max_halvings": ("int", 30),
                    "warmup_steps": ("int", 0), "eps": ("float", 1e-6)},
    "stability": {"tol_margin": ("float", 1e-9)},
    "lyapunov": {"samples": ("int", 10_000), "radius": ("float", 1e-3), "seed": ("int", 0),
                 "max_halvings": ("int", 12)},
    "controllability": {"abs_floor": ("float", 0.0)},
    "simulate": {"steps": ("int", 10_000), "start": ("word", "equilibrium"),
                 "perturbation": ("float", 1e-3), "record_every": ("int", 1), "seed": ("int", 0)},
    "sweep": {"gamma_start": ("float", -1.0), "gamma_stop": ("float", 0.005), "points": ("int", 50)},
}

_PHI = re.compile(r"^phi([1-9]\d*)$")


@dataclass(frozen=True)
class Settings:
    """Per-analysis options read from the scenario."""
    equilibrium: EquilibriumOptions
    v_bus_guess: float
    seeds: tuple
    tol_margin: float
    lyapunov: dict
    controllability: dict
    simulate: dict
    sweep: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str                      # "coupled" or "uncoupled"
    dt: float
    microgrid: MicrogridParams
    wann: WannParams
    coupling: CouplingParams
    terms: tuple                   # (text, line) pairs
    free: dict                     # qualified input name -> value
    settings: Settings
    source: str = ""
    defaults_applied: tuple = ()

    # -- systems -------------------------------------------------------------
    def subsystems(self):
        mg = discretize_euler(build_microgrid(self.microgrid, MG_ID), self.dt)
        dc = realize_state_space(self.wann, DC_ID)
        return [mg, dc]

    def build(self, gamma: float = None):
        """Compose the system, optionally with another ``gamma`` in ``H``."""
        params = self.coupling if gamma is None else self.coupling.with_gamma(gamma)
        terms = [_LineTerm(t, ln) for t, ln in self.terms]
        return compose(self.subsystems(), terms, params)

    def free_inputs(self, sys=None):
        """``(u_bar, d_bar)`` ordered like ``sys``'s free controls and disturbances."""
        sys = sys or self.build()
        return (np.array([self.free[n] for n in sys.control_names]),
                np.array([self.free[n] for n in sys.disturbance_names]))

    def initial_guess(self, v_bus: float = None, sys=None) -> np.ndarray:
        """Equilibrium guess built around a chosen bus voltage.

        Converter capacitors sit at the bus voltage, the battery and PV
        voltages follow the ideal conversion ratios, the battery SOC
        inverts ``V_oc``, the panel sits at its no-load thermal balance and
        the data-center states at the network's fixed point for the input
        the coupling (or the free ``u_DC``) implies.
        """
        v = self.settings.v_bus_guess if v_bus is None else float(v_bus)
        sys = sys or self.build()
        u, d = self.free_inputs(sys)
        env = dict(self.free)
        env.update(zip(sys.control_names, u))
        env.update(zip(sys.disturbance_names, d))
        mgp = self.microgrid
        d_sd = env["mg.D_sd"]
        d_su = env["mg.D_su"]
        v_bat = v / d_sd if d_sd > 0.05 else 2.0 * v
        cell = v_bat / mgp.battery.N_s
        soc = _invert_voc(mgp.battery.voc_curve, cell)
        g, t_inf = env["mg.G"], env["mg.T_inf"]
        t_pv = t_inf + mgp.pv.alpha * g / mgp.pv.h
        x_mg = [soc, 0.0, -v_bat / 5000.0, v_bat, v, t_pv, 100.0, d_su * v, v, 20.0, 0.0, v]
        x = np.concatenate([x_mg, wann_equilibrium(self.wann, 0.0)])
        u_dc = env.get("dc.u_DC")
        if u_dc is None:
            u_dc = sys.coupling_values(x, u, d)["dc.u_DC"]
        x[len(x_mg):] = wann_equilibrium(self.wann, u_dc)
        return x

    def seed_guesses(self, sys=None):
        sys = sys or self.build()
        return [self.initial_guess(v, sys) for v in self.settings.seeds]


class _LineTerm(str):
    """A term string that remembers its scenario line for error messages."""

    def __new__(cls, text, line):
        obj = super().__new__(cls, text)
        obj.line = line
        return obj


def _invert_voc(curve, volts):
    f = lambda s: curve(s) - volts
    lo, hi = -3.0, 3.0
    try:
        if f(lo) * f(hi) < 0:
            return float(brentq(f, lo, hi, xtol=1e-12))
    except (ValueError, ZeroDivisionError):
        pass
    return 0.5


# -- loading ---------------------------------------------------------------------

def shipped_path(name: str) -> Path:
    return Path(str(resources.files("hybridcouple") / "scenarios" / f"{name}.scenario"))


def resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    if str(path_or_name) in SHIPPED:
        return shipped_path(str(path_or_name))
    raise ConfigError(f"scenario {str(path_or_name)!r} not found (shipped: {', '.join(SHIPPED)})")


def load_scenario(path_or_name) -> Scenario:
    path = resolve(path_or_name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, source=str(path), base_dir=path.parent)


class _Reader:
    def __init__(self, doc):
        self.doc = doc
        self.defaults = []

    def entry(self, section, key):
        return self.doc.section(section).get(key)

    def get(self, section, key):
        kind, default = SCHEMA[section][key]
        e = self.entry(section, key)
        if e is None:
            if default is REQUIRED:
                line = self.doc.section_lines.get(section)
                raise ConfigError(f"missing required key {key!r}", field=f"{section}.{key}",
                                  line=line)
            if default is not None:
                self.defaults.append(f"{section}.{key}={default!r}")
            return default
        return {"float": e.as_float, "int": e.as_int, "floats": e.as_floats,
                "bool": e.as_bool, "word": e.as_word, "string": e.as_string}[kind]()

    def build(self, cls, section, **extra):
        kwargs = {k: self.get(section, k) for k in SCHEMA[section] if k in
                  {f.name for f in dataclasses.fields(cls)}}
        kwargs.update(extra)
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            key = (exc.field or "").split(".")[-1]
            e = self.entry(section, key)
            raise ConfigError(str(exc).split("] ", 1)[-1], field=f"{section}.{key}",
                              line=e.line if e else None, column=e.column if e else None) from None


def _check_keys(doc):
    for name, entries in doc.sections.items():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]", line=doc.section_lines[name], column=1)
        if name in ("terms", "wann"):
            continue
        for key, e in entries.items():
            if key not in SCHEMA[name]:
                allowed = ", ".join(SCHEMA[name])
                raise ConfigError(f"unknown key {key!r} (allowed: {allowed})", field=e.path,
                                  line=e.line, column=1)


def _wann(doc, rd, dt):
    entries = doc.section("wann")
    if not entries:
        rd.defaults.append("wann=published three-neuron network")
        return dataclasses.replace(DEFAULT_WANN, dt=dt)
    found = {}
    for key, e in entries.items():
        m = _PHI.match(key)
        if not m:
            raise ConfigError(f"unknown key {key!r} (expected phi1, phi2, ...)", field=e.path,
                              line=e.line, column=1)
        try:
            found[int(m.group(1))] = parse_activation(e.as_string())
        except ConfigError as exc:
            raise e.error(str(exc)) from None
    n = max(found)
    missing = [k for k in range(1, n + 1) if k not in found]
    if missing:
        raise ConfigError(f"activations {['phi%d' % k for k in missing]} missing", field="wann",
                          line=doc.section_lines["wann"])
    try:
        return WannParams(tuple(found[k] for k in range(1, n + 1)), dt)
    except ConfigError as exc:
        e = entries.get((exc.field or "").split(".")[-1])
        raise ConfigError(str(exc).split("] ", 1)[-1], field=exc.field,
                          line=e.line if e else None, column=e.column if e else None) from None


def _table(entry, base_dir):
    p = Path(entry.as_string())
    if not p.is_absolute():
        p = Path(base_dir) / p
    if not p.exists():
        raise entry.error(f"file {str(p)!r} does not exist")
    try:
        data = np.loadtxt(p, ndmin=2)
    except ValueError as exc:
        raise entry.error(f"cannot read table: {exc}") from None
    if data.shape[1] != 2:
        raise entry.error("table must have two columns")
    return data


def parse_scenario(text: str, source: str = "<string>", base_dir=".") -> Scenario:
    doc = config.parse(text, source)
    _check_keys(doc)
    rd = _Reader(doc)

    name = rd.get("scenario", "name")
    mode_e = rd.entry("scenario", "mode")
    mode = rd.get("scenario", "mode")
    if mode not in ("coupled", "uncoupled"):
        raise mode_e.error(f"mode must be 'coupled' or 'uncoupled', got {mode!r}")
    dt = rd.get("scenario", "dt")
    if not dt > 0:
        raise rd.entry("scenario", "dt").error(f"dt must be positive, got {dt!r}")

    # battery and its V_oc curve
    voc_kind = rd.get("battery", "voc")
    if voc_kind == "poly":
        if rd.entry("battery", "voc_table"):
            raise rd.entry("battery", "voc_table").error("voc_table given but voc = poly")
        curve = PolynomialVoc(rd.get("battery", "voc_poly"))
    elif voc_kind == "table":
        e = rd.entry("battery", "voc_table")
        if e is None:
            raise ConfigError("voc = table needs voc_table", field="battery.voc_table")
        data = _table(e, base_dir)
        try:
            curve = TabulatedVoc(data[:, 0], data[:, 1])
        except ConfigError as exc:
            raise e.error(str(exc).split("] ", 1)[-1]) from None
    else:
        raise rd.entry("battery", "voc").error(f"voc must be 'poly' or 'table', got {voc_kind!r}")
    battery = rd.build(BatteryParams, "battery", voc_curve=curve)
    diode = rd.build(DiodeParams, "pv.diode")
    mg = MicrogridParams(
        battery=battery,
        buck=rd.build(ConverterParams, "buck"),
        boost=rd.build(ConverterParams, "boost"),
        pv=rd.build(PvParams, "pv", diode=diode),
        bus=rd.build(BusParams, "bus"),
    )
    wann = _wann(doc, rd, dt)

    # coupling parameters
    h_kind = rd.get("coupling", "H")
    gamma = rd.get("coupling", "gamma")
    if h_kind == "linear":
        if rd.entry("coupling", "H_table"):
            raise rd.entry("coupling", "H_table").error("H_table given but H = linear")
        H = LinearH(rd.get("coupling", "H0"), gamma, rd.get("coupling", "T_ref"))
    elif h_kind == "table":
        e = rd.entry("coupling", "H_table")
        if e is None:
            raise ConfigError("H = table needs H_table", field="coupling.H_table")
        data = _table(e, base_dir)
        H = TabulatedH(tuple(data[:, 0]), tuple(data[:, 1]), gamma)
    else:
        raise rd.entry("coupling", "H").error(f"H must be 'linear' or 'table', got {h_kind!r}")
    coupling = rd.build(CouplingParams, "coupling", H=H)

    # coupling terms
    term_entries = doc.section("terms")
    if mode == "coupled" and not term_entries:
        raise ConfigError("coupled mode needs a [terms] section", field="terms")
    if mode == "uncoupled" and term_entries:
        e = next(iter(term_entries.values()))
        raise ConfigError("uncoupled mode must not declare [terms]", field="terms", line=e.line)
    # padded so expression columns in parse errors match the file
    terms = tuple(((e.key + " =").ljust(e.column - 1) + e.as_string(), e.line)
                  for e in term_entries.values())
    receivers = {e.key for e in term_entries.values()}

    # free variables
    free = {}
    u_e, d_e = rd.entry("free", "u"), rd.entry("free", "d")
    u = rd.get("free", "u")
    d = rd.get("free", "d")
    if len(u) != len(MG_CONTROLS):
        raise u_e.error(f"u needs {len(MG_CONTROLS)} values {list(MG_CONTROLS)}, got {len(u)}")
    if len(d) != len(MG_FREE_DISTURBANCES):
        raise d_e.error(f"d needs {len(MG_FREE_DISTURBANCES)} values {list(MG_FREE_DISTURBANCES)}, got {len(d)}")
    for n, v in zip(MG_CONTROLS, u):
        if not 0.0 <= v <= 1.0:
            raise u_e.error(f"duty cycle {n} = {v!r} outside [0, 1]")
        free[f"{MG_ID}.{n}"] = v
    for n, v in zip(MG_FREE_DISTURBANCES, d):
        free[f"{MG_ID}.{n}"] = v
    if d[0] < 0:
        raise d_e.error(f"irradiance G must be >= 0, got {d[0]!r}")
    for key, qual in COUPLABLE.items():
        e = rd.entry("free", key)
        if qual in receivers:
            if e is not None:
                raise e.error(f"{qual} is set by a coupling term and cannot also be free")
            continue
        if e is None:
            raise ConfigError(f"{qual} is neither coupled nor given a value", field=f"free.{key}",
                              line=doc.section_lines.get("free"))
        free[qual] = e.as_float()

    eq_opts = EquilibriumOptions(tol=rd.get("equilibrium", "tol"),
                                 max_iter=rd.get("equilibrium", "max_iter"),
                                 max_halvings=rd.get("equilibrium", "max_halvings"),
                                 eps=rd.get("equilibrium", "eps"),
                                 warmup_steps=rd.get("equilibrium", "warmup_steps"))
    for key in ("tol", "eps"):
        if not getattr(eq_opts, key) > 0:
            raise rd.entry("equilibrium", key).error(f"{key} must be positive")
    for key in ("max_iter", "max_halvings", "warmup_steps"):
        if getattr(eq_opts, key) < 0:
            raise rd.entry("equilibrium", key).error(f"{key} must be >= 0")
    v_guess = rd.get("equilibrium", "v_bus_guess")
    seeds = rd.get("equilibrium", "seeds")
    if seeds is None:
        seeds = (v_guess,)

    sim = {k: rd.get("simulate", k) for k in SCHEMA["simulate"]}
    if sim["start"] not in ("equilibrium", "guess"):
        raise rd.entry("simulate", "start").error("start must be 'equilibrium' or 'guess'")
    for k in ("steps", "record_every"):
        if sim[k] < 1:
            raise rd.entry("simulate", k).error(f"{k} must be >= 1")
    lyap = {k: rd.get("lyapunov", k) for k in SCHEMA["lyapunov"]}
    if lyap["samples"] < 1 or not lyap["radius"] > 0:
        raise ConfigError("samples must be >= 1 and radius > 0", field="lyapunov")
    sweep = {k: rd.get("sweep", k) for k in SCHEMA["sweep"]}
    if sweep["points"] < 2:
        raise rd.entry("sweep", "points").error("points must be >= 2")
    settings = Settings(
        equilibrium=eq_opts, v_bus_guess=v_guess, seeds=tuple(seeds),
        tol_margin=rd.get("stability", "tol_margin"),
        lyapunov=lyap,
        controllability={"abs_floor": rd.get("controllability", "abs_floor")},
        simulate=sim, sweep=sweep,
    )
    scn = Scenario(name=name or Path(source).stem, mode=mode, dt=dt, microgrid=mg, wann=wann,
                   coupling=coupling, terms=terms, free=free, settings=settings,
                   source=source, defaults_applied=tuple(rd.defaults))
    # validates the terms (guidelines, unknown signals) at load time
    scn.build()
    return scn


def format_wann(p: WannParams):
    return [f'phi{n} = "{format_activation(a)}"' for n, a in enumerate(p.activations, start=1)]


def gamma_grid(start: float, stop: float, points: int):
    """``points`` evenly spaced values from ``start`` to ``stop`` inclusive."""
    if points < 2 or not (math.isfinite(start) and math.isfinite(stop)):
        raise ConfigError("gamma grid needs >= 2 points and finite ends", field="sweep")
    return tuple(float(g) for g in np.linspace(start, stop, points))
