"""Command-line front end.

::

    hybridcouple <command> --scenario case_a --out results/ [--steps N]
                 [--gamma-list -1,-0.5,0.005] [--seed N]

Commands: equilibrium, stability, lyapunov, controllability, sweep, simulate.
``--scenario`` takes a path or the name of a shipped scenario.  Each run
writes its CSV files and a ``run_log.jsonl`` (one JSON object per line)
into ``--out``.

Exit status: 0 success (an unstable result is a finding, not an error),
2 bad command line, 3 configuration error, 4 equilibrium did not
converge, 5 simulation diverged (trajectory still written), 6 other
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import reports
from .analysis.controllability import controllability_rank, pbh_rank
from .analysis.equilibrium import find_equilibrium
from .analysis.linearize import jacobian_fd
from .analysis.lyapunov import lyapunov_quadratic, sampled_decrease
from .analysis.simulate import perturbation, simulate
from .analysis.stability import eigen_report
from .analysis.sweep import gamma_sweep, stability_crossings
from .errors import ConfigError, NumericalError
from .scenario import gamma_grid, load_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CONVERGENCE = 4
EXIT_DIVERGENCE = 5
EXIT_NUMERICAL = 6

COMMANDS = ("equilibrium", "stability", "lyapunov", "controllability", "sweep", "simulate")
RUN_LOG = "run_log.jsonl"

log = logging.getLogger("hybridcouple")


class RunLog:
    """Machine-readable event log; deterministic (no timestamps)."""

    def __init__(self, path):
        self.path = Path(path)
        self.events = []

    def add(self, event, **fields):
        self.events.append({"event": event, **{k: _jsonable(v) for k, v in fields.items()}})

    def write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(e, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


class CommandFailed(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _signal_units(sys):
    units = {}
    for s in sys.subsystems:
        for group in (s.states, s.controls, s.disturbances, s.outputs):
            for sig in group:
                units[f"{s.id}.{sig.name}"] = sig.unit
    return units


def solve(scn, sys, rl):
    """Equilibrium from the scenario guess, then from each seed in turn."""
    u, d = scn.free_inputs(sys)
    opts = scn.settings.equilibrium
    tried = [scn.settings.v_bus_guess] + [v for v in scn.settings.seeds if v != scn.settings.v_bus_guess]
    eq = None
    for v in tried:
        eq = find_equilibrium(sys, scn.initial_guess(v, sys), u, d, opts)
        rl.add("equilibrium_attempt", v_bus_guess=v, converged=eq.converged,
               residual=eq.residual_norm, iterations=eq.iterations, message=eq.message)
        if eq.converged:
            return eq
    raise CommandFailed(EXIT_CONVERGENCE, f"equilibrium did not converge: {eq.message} "
                                          f"(residual {eq.residual_norm:.3g})")


def cmd_equilibrium(scn, sys, args, out, rl):
    eq = solve(scn, sys, rl)
    units = _signal_units(sys)
    rows = reports.equilibrium_rows(sys.state_names, eq.x, sys.state_units)
    cv = sys.coupling_values(eq.x, eq.u_bar, eq.d_bar)
    rows += [(k, v, units[k]) for k, v in cv.items()]
    reports.write_csv(out / "equilibrium.csv", reports.EQUILIBRIUM_HEADER, rows)
    rl.add("equilibrium", residual=eq.residual_norm, iterations=eq.iterations,
           **{k: float(v) for k, v in zip(sys.state_names, eq.x)})
    return f"equilibrium converged, residual {eq.residual_norm:.3e}"


def _stability(scn, sys, rl):
    eq = solve(scn, sys, rl)
    lin = jacobian_fd(sys, eq.x, eq.u_bar, eq.d_bar, scn.settings.equilibrium.eps)
    rep = eigen_report(lin.A, scn.settings.tol_margin)
    rl.add("stability", classification=rep.classification, spectral_radius=rep.spectral_radius,
           n_outside=rep.n_outside, tol_margin=rep.tol_margin)
    return eq, lin, rep


def cmd_stability(scn, sys, args, out, rl):
    _, _, rep = _stability(scn, sys, rl)
    reports.write_csv(out / "eigenvalues.csv", reports.EIGENVALUE_HEADER,
                      reports.eigenvalue_rows(rep.eigenvalues))
    return (f"{rep.classification}: spectral radius {rep.spectral_radius:.12f}, "
            f"{rep.n_outside} eigenvalue(s) outside the unit circle")


def cmd_lyapunov(scn, sys, args, out, rl):
    eq, lin, rep = _stability(scn, sys, rl)
    res = lyapunov_quadratic(lin.A)
    cfg = dict(scn.settings.lyapunov)
    if args.seed is not None:
        cfg["seed"] = args.seed
    rows = [("status", res.status), ("spectral_radius", rep.spectral_radius),
            ("min_eigenvalue_P", res.min_eigenvalue), ("equation_residual", res.residual)]
    if res.certified:
        s = sampled_decrease(sys, res.P, eq.x, eq.u_bar, eq.d_bar, cfg["radius"], cfg["samples"],
                             cfg["seed"], cfg["max_halvings"])
        rows += [("verified_radius", s.radius), ("samples", s.samples),
                 ("radii_tested", len(s.tested))]
        rl.add("lyapunov_sampling", radius=s.radius, samples=s.samples,
               tested=[list(t) for t in s.tested])
    reports.write_csv(out / "lyapunov.csv", reports.SUMMARY_HEADER, rows)
    rl.add("lyapunov", status=res.status, min_eigenvalue=res.min_eigenvalue, residual=res.residual)
    return f"lyapunov certificate: {res.status}"


def cmd_controllability(scn, sys, args, out, rl):
    _, lin, _ = _stability(scn, sys, rl)
    rep = controllability_rank(lin, abs_floor=scn.settings.controllability["abs_floor"])
    pbh = pbh_rank(lin.A, lin.B)
    reports.write_csv(out / "controllability.csv", reports.SINGULAR_HEADER,
                      list(enumerate(rep.singular_values.tolist())))
    rl.add("controllability", rank=rep.rank, n_states=rep.n_states, threshold=rep.threshold,
           condition=rep.condition, pbh_rank=pbh)
    return f"controllability rank {rep.rank} of {rep.n_states} (PBH estimate {pbh})"


def cmd_sweep(scn, sys, args, out, rl):
    if args.gamma_list:
        gammas = args.gamma_list
    else:
        cfg = scn.settings.sweep
        gammas = gamma_grid(cfg["gamma_start"], cfg["gamma_stop"], cfg["points"])
    u, d = scn.free_inputs(sys)
    rows = gamma_sweep(scn.build, gammas, scn.initial_guess(sys=sys), u, d,
                       scn.settings.equilibrium, scn.seed_guesses(sys), scn.settings.tol_margin,
                       scn.settings.equilibrium.eps)
    reports.write_csv(out / "sweep.csv", reports.SWEEP_HEADER, reports.sweep_rows(rows))
    reports.write_csv(out / "sweep_eigenvalues.csv", reports.SWEEP_EIGEN_HEADER,
                      reports.sweep_eigen_rows(rows))
    crossings = stability_crossings(rows)
    for r in rows:
        rl.add("sweep_point", gamma=r.gamma, converged=r.converged, classification=r.classification,
               spectral_radius=r.spectral_radius, n_outside=r.n_outside, start=r.start,
               max_jump=r.max_jump, message=r.message)
    rl.add("sweep", points=len(rows), failed=sum(not r.converged for r in rows),
           crossings=[list(c) for c in crossings])
    found = ", ".join(f"({a:.6g}, {b:.6g})" for a, b in crossings) or "none"
    return f"sweep over {len(rows)} gamma values, stability changes in: {found}"


def cmd_simulate(scn, sys, args, out, rl):
    cfg = dict(scn.settings.simulate)
    if args.seed is not None:
        cfg["seed"] = args.seed
    steps = args.steps or cfg["steps"]
    u, d = scn.free_inputs(sys)
    if cfg["start"] == "equilibrium":
        eq = solve(scn, sys, rl)
        x0 = eq.x + perturbation(eq.x, cfg["perturbation"], cfg["seed"])
    else:
        x0 = scn.initial_guess(sys=sys)
    traj = simulate(sys, x0, u, d, steps, cfg["record_every"])
    reports.write_csv(out / "trajectory.csv", reports.trajectory_header(traj),
                      reports.trajectory_rows(traj))
    rl.add("simulate", steps=steps, start=cfg["start"], seed=cfg["seed"],
           diverged=traj.diverged, stop_step=traj.stop_step, reason=traj.reason)
    if traj.diverged:
        raise CommandFailed(EXIT_DIVERGENCE, f"simulation diverged: {traj.reason}")
    return f"simulated {steps} steps"


HANDLERS = {
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "lyapunov": cmd_lyapunov,
    "controllability": cmd_controllability,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


def _gamma_list(text):
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty gamma list")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="hybridcouple",
                                description="Analyse coupled microgrid / data-center scenarios.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", required=True, help="scenario file or shipped name "
                                                      "(case_a, case_b, uncoupled)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--steps", type=_positive_int, help="simulation steps (simulate)")
    p.add_argument("--gamma-list", type=_gamma_list, help="comma-separated gamma values (sweep)")
    p.add_argument("--seed", type=int, help="random seed for perturbations and sampling")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command, scenario, out, steps=None, gamma_list=None, seed=None) -> int:
    """Run one command; returns the exit status."""
    args = argparse.Namespace(command=command, scenario=scenario, out=Path(out), steps=steps,
                              gamma_list=gamma_list, seed=seed)
    return _run(args)


def _run(args) -> int:
    out = Path(args.out)
    rl = RunLog(out / RUN_LOG)
    rl.add("start", command=args.command, scenario=str(args.scenario), steps=args.steps,
           gamma_list=args.gamma_list, seed=args.seed)
    code = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            scn = load_scenario(args.scenario)
            for item in scn.defaults_applied:
                rl.add("default_applied", value=item)
            sys_ = scn.build()
            msg = HANDLERS[args.command](scn, sys_, args, out, rl)
            print(f"{scn.name}: {msg}")
        except ConfigError as exc:
            code = EXIT_CONFIG
            rl.add("error", kind="config", message=str(exc), field=exc.field, line=exc.line,
                   column=exc.column)
            print(f"configuration error: {exc}", file=sys.stderr)
        except CommandFailed as exc:
            code = exc.code
            rl.add("error", kind="convergence" if code == EXIT_CONVERGENCE else "divergence",
                   message=str(exc))
            print(str(exc), file=sys.stderr)
        except (NumericalError, ArithmeticError) as exc:
            code = EXIT_NUMERICAL
            rl.add("error", kind="numerical", message=str(exc))
            print(f"numerical failure: {exc}", file=sys.stderr)
    seen = set()
    for w in caught:
        key = (w.category.__name__, str(w.message))
        if key not in seen:
            seen.add(key)
            rl.add("warning", category=key[0], message=key[1])
    rl.add("exit", status=code)
    rl.write()
    return code


def _join_gamma_list(argv):
    # argparse reads "-1,-0.5" as an option, so glue it to its flag
    out, it = [], iter(argv)
    for a in it:
        if a == "--gamma-list":
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_gamma_list(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
