"""Command-line front end.

Subcommands:
  simulate      run a scenario, write trajectory.csv / summary.json / manifest.json
  trackability  rank condition and interaction-matrix spectra of a scenario
  gains         gain-feasibility report (closed-form constants, radii, verdict)
  export-plots  per-figure CSV extracts from a completed run directory

Exit codes: 0 ok, 1 I/O problem, 2 configuration problem, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .engine import CSV_HEADER, empirical_omega_bar, run_scenario
from .errors import ConfigError, ContractError, SwarmSimError
from .scenario import config_hash, load_config
from .stability import (BoundEstimates, build_gain_report, estimate_l_phi,
                        estimate_lipschitz)
from .topology import analyze_topology, check_trackability

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        raw = dict(cfg.raw)
        if args.dt is not None or args.duration is not None:
            integ = dict(raw["integrator"])
            if args.dt is not None:
                integ["dt"] = args.dt
            if args.duration is not None:
                integ["duration_s"] = args.duration
            raw["integrator"] = integ
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return _fail(EXIT_IO, f"output directory {out_dir} is not writable: {exc}")

    result = run_scenario(raw, args.seed)
    cfg_hash = result.config_hash
    result.log.write_csv(out_dir / "trajectory.csv", cfg_hash)
    (out_dir / "summary.json").write_text(
        json.dumps(result.summary_dict(), indent=2, sort_keys=True) + "\n")
    manifest = {
        "config_path": str(Path(args.config).resolve()),
        "config_hash": cfg_hash,
        "seed": args.seed,
        "out_dir": str(out_dir.resolve()),
        "tool_version": __version__,
        "dt": raw["integrator"]["dt"],
        "duration_s": raw["integrator"]["duration_s"],
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if result.aborted:
        return _fail(EXIT_RUNTIME,
                     f"run aborted at t={result.aborted['t']:.3f} s: "
                     f"{result.aborted['reason']} (partial artifacts written)")
    if not result.trackable:
        print("warning: scenario is not trackable; regulation not expected",
              file=sys.stderr)
    print(f"wrote {out_dir / 'trajectory.csv'} ({len(result.log.t)} samples, "
          f"seed {args.seed}, config {cfg_hash})")
    return EXIT_OK


def cmd_trackability(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    track = check_trackability(cfg.sensing)
    inter = analyze_topology(cfg.graph, cfg.sensing)
    report = {
        "rank": track.rank,
        "trackable": track.trackable,
        "h_min": inter.h_spectrum[0],
        "h_max": inter.h_spectrum[1],
        "j_min": inter.j_spectrum[0],
        "j_max": inter.j_spectrum[1],
    }
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        verdict = "trackable" if track.trackable else "NOT trackable"
        print(f"rank(sum b_i C_i^T C_i) = {track.rank}  ->  {verdict}")
        print(f"H spectrum: [{report['h_min']:.6g}, {report['h_max']:.6g}]")
        print(f"J spectrum: [{report['j_min']:.6g}, {report['j_max']:.6g}] "
              f"(per-block; J = (L+I) kron I_p)")
        if not cfg.graph.is_connected():
            print("note: communication graph is not connected")
    return EXIT_OK


_BOUND_FIELDS = ("lipschitz_L", "l_phi", "d_bound", "omega_bar", "omega_dot_bar",
                 "q0_bar", "q0_dot_bar", "theta_bar", "eps_bar", "m_bound", "chi")


def cmd_gains(args) -> int:
    try:
        cfg = load_config(args.config)
        inter = analyze_topology(cfg.graph, cfg.sensing)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))

    overrides = {}
    if args.bounds:
        try:
            overrides = json.loads(Path(args.bounds).read_text())
        except FileNotFoundError:
            return _fail(EXIT_IO, f"bounds file not found: {args.bounds}")
        except json.JSONDecodeError as exc:
            return _fail(EXIT_CONFIG, f"bounds file is not valid JSON: {exc}")
        unknown = set(overrides) - set(_BOUND_FIELDS)
        if unknown:
            return _fail(EXIT_CONFIG, f"unknown bound fields: {sorted(unknown)}")

    caveats = []
    chi = float(overrides.get("chi", 1e4))
    if "chi" not in overrides:
        caveats.append("chi defaulted (not user-pinned)")
    if "lipschitz_L" in overrides:
        lip = float(overrides["lipschitz_L"])
    else:
        lip, n_lip = _estimate_scenario_lipschitz(cfg, chi)
        caveats.append(f"lipschitz_L estimated by sampling ({n_lip} pairs); "
                       "lower bound on the true constant")
    if "l_phi" in overrides:
        l_phi = float(overrides["l_phi"])
    else:
        est = estimate_l_phi(cfg.arch, kappa_radius=chi, theta_bar=cfg.theta_bar,
                             n_samples=500, seed=0, eps_proj=cfg.eps_proj)
        l_phi = est.value
        caveats.append(f"l_phi estimated by sampling ({est.samples} samples); "
                       "lower bound on the true constant")
    if "omega_bar" in overrides:
        omega_bar = float(overrides["omega_bar"])
    else:
        omega_bar = empirical_omega_bar(cfg, seed=0, duration=min(60.0, cfg.duration))
        caveats.append("omega_bar from an open-loop trajectory sweep (empirical)")

    defaults = {"d_bound": 1.0, "omega_dot_bar": max(omega_bar, 1e-6),
                "q0_bar": 15.0, "q0_dot_bar": 5.0, "eps_bar": 0.1, "m_bound": 1.0}
    values = {}
    for name, fallback in defaults.items():
        if name in overrides:
            values[name] = float(overrides[name])
        else:
            values[name] = fallback
            caveats.append(f"{name} defaulted (not user-pinned)")

    try:
        bounds = BoundEstimates(
            lipschitz_L=lip, l_phi=l_phi, omega_bar=omega_bar,
            theta_bar=float(overrides.get("theta_bar", cfg.theta_bar)),
            chi=chi, n_agents=cfg.n_agents, **values)
        report = build_gain_report(cfg.gains, inter.h_spectrum, inter.j_spectrum,
                                   bounds, caveats=tuple(caveats))
    except ContractError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if args.json:
        print(report.to_json())
    else:
        print(report.table())
    return EXIT_OK


def _estimate_scenario_lipschitz(cfg, chi: float) -> tuple:
    """Sampled Lipschitz constant of the scenario's drift over a state ball.

    The drift is evaluated in the control frame at the initial reference
    orbit; the sampling ball is capped to keep ranges physical.
    """
    from . import orbital

    orbit = orbital.periapsis_orbit(cfg.periapsis_alt, cfg.apoapsis_alt,
                                    cfg.inclination)
    radius = min(chi, 1e5)

    def drift(batch):
        q = batch[:, :3]
        qd = batch[:, 3:]
        return orbital.rect_drift_arrays(q, qd, orbit.r, orbit.tau,
                                         orbit.tau_dot, orbit.mu)

    est = estimate_lipschitz(drift, radius=radius, dim=6, n_pairs=10000, seed=0)
    return est.value, est.samples


def cmd_export_plots(args) -> int:
    run_dir = Path(args.run)
    traj = run_dir / "trajectory.csv"
    if not traj.exists():
        return _fail(EXIT_IO, f"missing run artifact: {traj}")
    lines = traj.read_text().strip().split("\n")
    if len(lines) < 3 or not lines[0].startswith("# config_hash="):
        return _fail(EXIT_IO, f"{traj} is not a trajectory file")
    cfg_hash = lines[0].split("=", 1)[1]
    if lines[1] != CSV_HEADER:
        return _fail(EXIT_IO, f"{traj} header does not match the trajectory schema")
    rows = [line.split(",") for line in lines[2:]]
    agents = sorted({int(r[1]) for r in rows})
    n = len(agents)
    if len(rows) % n != 0:
        return _fail(EXIT_IO,
                     f"{traj} is truncated: {len(rows)} rows not divisible by "
                     f"{n} agents")
    data = np.asarray([[float(v) for v in r] for r in rows])
    t = data[::n, 0]

    def wide(col: int) -> np.ndarray:
        return data[:, col].reshape(-1, n)

    def write(name: str, header: str, body: list) -> Path:
        path = run_dir / name
        with open(path, "w") as fh:
            fh.write(f"# config_hash={cfg_hash}\n{header}\n")
            fh.write("\n".join(body) + ("\n" if body else ""))
        return path

    # 3D trajectories, first 60 s, rect coordinates from the radar readout
    mask = t <= 60.0
    sig, gam, phi = wide(9), wide(10), wide(11)
    body = []
    for k in np.nonzero(mask)[0]:
        for ai in range(n):
            x = sig[k, ai] * math.cos(phi[k, ai]) * math.cos(gam[k, ai])
            y = sig[k, ai] * math.cos(phi[k, ai]) * math.sin(gam[k, ai])
            z = sig[k, ai] * math.sin(phi[k, ai])
            body.append("%.17g,%d,%.17g,%.17g,%.17g" % (t[k], agents[ai], x, y, z))
    p1 = write("fig2_traj.csv", "t,agent,x,y,z", body)

    zeta_cols = ",".join(f"zeta_tilde_norm_{i}" for i in agents)
    body = ["%.17g," % tk + ",".join("%.17g" % v for v in row)
            for tk, row in zip(t, wide(3))]
    p2 = write("fig3_zeta.csv", "t," + zeta_cols, body)

    e_cols = ",".join(f"e_norm_{i}" for i in agents)
    body = ["%.17g," % tk + ",".join("%.17g" % v for v in row)
            for tk, row in zip(t, wide(2))]
    p3 = write("fig4_e.csv", "t," + e_cols, body)
    print(f"wrote {p1}, {p2}, {p3}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmsim",
        description="Multi-spacecraft servicing simulation and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("trackability", help="rank condition and spectra")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_trackability)

    p = sub.add_parser("gains", help="gain-feasibility report")
    p.add_argument("--config", required=True)
    p.add_argument("--bounds", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_gains)

    p = sub.add_parser("export-plots", help="per-figure CSV extracts")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SwarmSimError as exc:
        return _fail(EXIT_RUNTIME, str(exc))


if __name__ == "__main__":
    sys.exit(main())
