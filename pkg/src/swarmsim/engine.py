"""Closed-loop simulation engine.

One run integrates, with a fixed-step classical RK4 over a single flat state
vector: the reference orbit, the target, and every agent's physical state,
observer/filter state, and network weights.  Measurements (y_i and the
neighbor relative positions) are sampled at the measurement rate and held
constant across integrator substeps; their noise is keyed by
(seed, agent, epoch index) so realizations are invariant to the step size.
Controls and message couplings are evaluated from the instantaneous states
inside the derivative function, matching the continuous-time update laws.

Runs are deterministic given (config, seed).  Aborts (non-finite state,
range-floor or pole-guard hits) produce a time-stamped diagnostic record
instead of an exception escaping the run.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import orbital
from .agents import Gains, SwarmLayer, diagnostic_errors, w_aux_init
from .dnn import kaiming_init, param_count
from .errors import ConfigError, SingularityError
from .scenario import ScenarioConfig, config_hash, validate_config
from .topology import check_trackability

__all__ = [
    "Measurements",
    "WorldState",
    "TrajectoryLog",
    "DiagnosticsLog",
    "RunResult",
    "rk4_step",
    "sample_measurements",
    "initialize_scenario",
    "run_scenario",
    "run_many",
    "summarize_metrics",
    "settling_time",
    "empirical_omega_bar",
    "TRANSCRIPTION_NOTE",
]

# substream tags for the per-purpose RNG keys
_TAG_INIT = 1
_TAG_DNN = 2
_TAG_MEAS = 3

TRANSCRIPTION_NOTE = (
    "radar-coordinate drift/disturbance use the rectangular-oracle-validated "
    "forms (azimuth gravity term sign and elevation frame trig factor "
    "corrected relative to the commonly quoted expressions)"
)

CSV_HEADER = ("t,agent,e_norm,zeta_tilde_norm,eta_tilde_norm,"
              "u_x,u_y,u_z,theta_norm,sigma,gamma,phi")


def rk4_step(state: np.ndarray, t: float, dt: float, deriv_fn) -> np.ndarray:
    """One classical fourth-order step of state' = deriv_fn(t, state)."""
    k1 = deriv_fn(t, state)
    k2 = deriv_fn(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = deriv_fn(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = deriv_fn(t + dt, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class Measurements:
    """One measurement epoch: raw sensor values and the held eta aggregate."""

    epoch: int
    y: list
    d: list
    eta: np.ndarray


@dataclass
class WorldState:
    """Full simulation state plus the held measurements."""

    t: float
    ref: np.ndarray            # [r, r_dot, tau, theta]
    q0: np.ndarray             # target position, control-frame coordinates
    q0_dot: np.ndarray
    q: np.ndarray              # (N, 3) agent positions, control-frame coordinates
    q_dot: np.ndarray
    eta_hat: np.ndarray        # (N, 3)
    zeta_hat: np.ndarray       # (N, 3)
    w_aux: np.ndarray          # (N, 3)
    theta: np.ndarray          # (N, p)
    measurements: Measurements
    seed: int


def sample_measurements(q: np.ndarray, q0: np.ndarray, config: ScenarioConfig,
                        seed: int, epoch: int) -> Measurements:
    """Sensor snapshot at one epoch.

    y_i = C_i (q0 - q_i) + noise, neighbor relative positions exact unless
    d_std > 0.  Noise generators are keyed (seed, agent, epoch), making the
    realization independent of dt.
    """
    n = config.n_agents
    ys, ds = [], []
    eta = np.zeros((n, 3))
    for i in range(n):
        rng = np.random.default_rng([seed, _TAG_MEAS, epoch, i])
        c = config.sensing.outputs[i]
        y = c @ (q0 - q[i])
        if config.y_std > 0:
            y = y + config.y_std * rng.standard_normal(c.shape[0])
        d_i = {}
        acc = np.zeros(3)
        for j in config.graph.neighbors(i):
            d = q[j] - q[i]
            if config.d_std > 0:
                d = d + config.d_std * rng.standard_normal(3)
            d_i[j] = d
            acc += d
        if config.sensing.flags[i]:
            acc = acc + c.T @ y
        ys.append(y)
        ds.append(d_i)
        eta[i] = acc
    return Measurements(epoch=epoch, y=ys, d=ds, eta=eta)


def _control_coords(rect_pos, rect_vel, config):
    """Rect truth -> control-frame coordinates (identity in the default frame)."""
    if config.control_frame == "rect":
        return rect_pos, rect_vel
    n = rect_pos.shape[0]
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    for i in range(n):
        s = orbital.rect_to_spherical(
            orbital.RectRelState(*rect_pos[i], *rect_vel[i]),
            config.sigma_floor, config.pole_guard)
        pos[i] = s.pos
        vel[i] = s.rates
    return pos, vel


def initialize_scenario(config: ScenarioConfig, seed: int) -> WorldState:
    """World at t=0: reference at periapsis, target per mode, agents offset.

    Offsets are spherical (range uniform in radial_range, azimuth/elevation
    uniform in angle_range) with zero relative rates; observer states start
    at zero; w_aux starts so the filter output is exactly zero; weights are
    Kaiming-initialized per agent.
    """
    orbit = orbital.periapsis_orbit(config.periapsis_alt, config.apoapsis_alt,
                                    config.inclination)
    rng = np.random.default_rng([seed, _TAG_INIT])
    n = config.n_agents
    sig = rng.uniform(*config.radial_range, n)
    gam = rng.uniform(*config.angle_range, n)
    phi = rng.uniform(*config.angle_range, n)
    if config.control_frame == "rect":
        q = np.stack([sig * np.cos(phi) * np.cos(gam),
                      sig * np.cos(phi) * np.sin(gam),
                      sig * np.sin(phi)], axis=1)
    else:
        q = np.stack([sig, gam, phi], axis=1)
    q_dot = np.zeros((n, 3))

    p = param_count(config.arch)
    theta = np.zeros((n, p))
    if config.weight_init == "kaiming":
        for i in range(n):
            theta[i] = kaiming_init(config.arch, [seed, _TAG_DNN, i])

    q0 = np.zeros(3)
    q0_dot = np.zeros(3)
    measurements = sample_measurements(q, q0, config, seed, epoch=0)
    eta_hat = np.zeros((n, 3))
    w_aux = np.stack([w_aux_init(measurements.eta[i] - eta_hat[i], config.gains)
                      for i in range(n)])
    return WorldState(
        t=0.0,
        ref=np.array([orbit.r, orbit.r_dot, orbit.tau, orbit.theta]),
        q0=q0, q0_dot=q0_dot, q=q, q_dot=q_dot,
        eta_hat=eta_hat, zeta_hat=np.zeros((n, 3)), w_aux=w_aux, theta=theta,
        measurements=measurements, seed=seed,
    )


@dataclass
class TrajectoryLog:
    """Per-sample, per-agent diagnostics (norms and controls) plus the reference."""

    t: np.ndarray
    e_norm: np.ndarray          # (n_log, N)
    zeta_tilde_norm: np.ndarray
    eta_tilde_norm: np.ndarray
    theta_norm: np.ndarray
    u: np.ndarray               # (n_log, N, 3)
    sigma: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    r_ref: np.ndarray
    tau_ref: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.e_norm.shape[1]

    def write_csv(self, path, cfg_hash: str) -> None:
        lines = [f"# config_hash={cfg_hash}", CSV_HEADER]
        for k in range(len(self.t)):
            for i in range(self.n_agents):
                vals = (self.t[k], i, self.e_norm[k, i], self.zeta_tilde_norm[k, i],
                        self.eta_tilde_norm[k, i], self.u[k, i, 0], self.u[k, i, 1],
                        self.u[k, i, 2], self.theta_norm[k, i], self.sigma[k, i],
                        self.gamma[k, i], self.phi[k, i])
                lines.append(",".join("%d" % v if isinstance(v, (int, np.integer))
                                      else "%.17g" % v for v in vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class DiagnosticsLog:
    """Dense per-step vector records for identity checks (memory-heavier)."""

    t: np.ndarray
    eta_tilde_agent: np.ndarray   # (n_steps+1, N, 3): held eta - eta_hat
    rho: np.ndarray
    zeta_tilde: np.ndarray        # truth-side
    e: np.ndarray
    u: np.ndarray


@dataclass
class RunResult:
    config_hash: str
    seed: int
    log: TrajectoryLog
    aborted: dict | None = None
    theta_retractions: int = 0
    trackable: bool = True
    diagnostics: DiagnosticsLog | None = None
    notes: tuple = ()

    def summary_dict(self) -> dict:
        out = {
            "schema": 1,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "aborted": self.aborted,
            "trackable": self.trackable,
            "theta_retractions": self.theta_retractions,
            "notes": list(self.notes),
            "metrics": summarize_metrics(self.log) if len(self.log.t) > 1 else {},
        }
        return out


class _Engine:
    """Internal: wires the batched agent layer to the plant for one config."""

    def __init__(self, config: ScenarioConfig):
        from .topology import build_laplacian

        self.cfg = config
        self.n = config.n_agents
        self.p = param_count(config.arch)
        self.layer = SwarmLayer(config.sensing, build_laplacian(config.graph),
                                config.gains, config.arch, config.theta_bar,
                                config.eps_proj, config.control_frame)
        self.ballistic = np.array([sc.drag_coeff * sc.area / sc.mass
                                   for sc in config.spacecraft])
        self.j2_on = config.spacecraft[0].j2_enabled if config.spacecraft else False
        self.drag_on = config.spacecraft[0].drag_enabled if config.spacecraft else False
        # flat layout offsets
        n = self.n
        sizes = [4, 3, 3, 3 * n, 3 * n, 3 * n, 3 * n, 3 * n, n * self.p]
        self.offs = np.concatenate([[0], np.cumsum(sizes)])

    def pack(self, w: WorldState) -> np.ndarray:
        return np.concatenate([w.ref, w.q0, w.q0_dot, w.q.ravel(), w.q_dot.ravel(),
                               w.eta_hat.ravel(), w.zeta_hat.ravel(),
                               w.w_aux.ravel(), w.theta.ravel()])

    def views(self, x: np.ndarray):
        o = self.offs
        n = self.n
        return (x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]],
                x[o[3]:o[4]].reshape(n, 3), x[o[4]:o[5]].reshape(n, 3),
                x[o[5]:o[6]].reshape(n, 3), x[o[6]:o[7]].reshape(n, 3),
                x[o[7]:o[8]].reshape(n, 3), x[o[8]:o[9]].reshape(n, self.p))

    def plant_accel(self, q, q_dot, ref, u, orbit_obj):
        """Control-frame coordinate accelerations of the agents."""
        cfg = self.cfg
        r, r_dot, tau = ref[0], ref[1], ref[2]
        tau_dot = -2.0 * r_dot * tau / r
        if cfg.truth_frame == "rect" and cfg.control_frame == "rect":
            acc = orbital.rect_drift_arrays(q, q_dot, r, tau, tau_dot, orbit_obj.mu)
            if self.j2_on:
                acc = acc + orbital.j2_accel_arrays(q, orbit_obj)
            if self.drag_on:
                acc = acc + orbital.drag_accel_arrays(q_dot, self.ballistic,
                                                      r - orbital.R_EARTH)
            return acc + u
        return self._plant_accel_general(q, q_dot, r, tau, tau_dot, u, orbit_obj)

    def _plant_accel_general(self, q, q_dot, r, tau, tau_dot, u, orbit_obj):
        """Mixed/spherical frames: per-agent transforms (diagnostic paths)."""
        cfg = self.cfg
        acc = np.empty((self.n, 3))
        for i in range(self.n):
            if cfg.control_frame == "rect":
                rect = orbital.RectRelState(*q[i], *q_dot[i])
                a = orbital.rect_drift_arrays(rect.pos, rect.vel, r, tau, tau_dot,
                                              orbit_obj.mu) + u[i]
                s = None
            else:
                s = orbital.SphericalRelState(*q[i], *q_dot[i])
                f, w = orbital.spherical_drift_arrays(s.pos, s.rates, r, tau, tau_dot,
                                                      orbit_obj.mu,
                                                      cfg.sigma_floor, cfg.pole_guard)
                a = f + w + u[i]   # u already in coordinate-acceleration form (g u)
                rect = orbital.spherical_to_rect(s)
            pert = np.zeros(3)
            if self.j2_on:
                pert = pert + orbital.j2_accel(rect, orbit_obj)
            if self.drag_on:
                pert = pert + orbital.drag_accel(rect.vel, cfg.spacecraft[i],
                                                 r - orbital.R_EARTH)
            if np.any(pert):
                if cfg.control_frame == "rect":
                    a = a + pert
                else:
                    a = a + orbital.rect_accel_to_spherical(s, pert)
            acc[i] = a
        return acc

    def deriv(self, t: float, x: np.ndarray, eta_held: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        ref, q0, q0d, q, qd, eta_hat, zeta_hat, w_aux, theta = self.views(x)
        r, r_dot, tau, _ = ref
        orbit_obj = orbital.ReferenceOrbit(r=r, r_dot=r_dot, tau=tau, theta=ref[3],
                                           inclination=cfg.inclination)
        sigma = q[:, 0] if cfg.control_frame == "spherical" else None
        eh_dot, zh_dot, w_dot, th_dot, u, gu = self.layer.derivs(
            eta_held, eta_hat, zeta_hat, w_aux, theta, sigma)
        applied = gu if cfg.control_frame == "spherical" else u
        acc = self.plant_accel(q, qd, ref, applied, orbit_obj)
        q0_acc = orbital.target_accel_f0(q0, q0d, cfg.target_mode, t,
                                         cfg.target_params)
        ref_dot = np.array([r_dot, r * tau ** 2 - orbit_obj.mu / r ** 2,
                            -2.0 * r_dot * tau / r, tau])
        return np.concatenate([ref_dot, q0d, q0_acc, qd.ravel(), acc.ravel(),
                               eh_dot.ravel(), zh_dot.ravel(), w_dot.ravel(),
                               th_dot.ravel()])


def _lenient_spherical(q: np.ndarray) -> tuple:
    """Radar-coordinate readout of rect positions for logging (no pole guard)."""
    sig = np.linalg.norm(q, axis=1)
    safe = np.maximum(sig, 1e-300)
    gam = np.arctan2(q[:, 1], q[:, 0])
    phi = np.arcsin(np.clip(q[:, 2] / safe, -1.0, 1.0))
    return sig, gam, phi


def run_scenario(config: ScenarioConfig | dict, seed: int,
                 collect_diagnostics: bool = False) -> RunResult:
    """Run one closed-loop scenario; deterministic in (config, seed)."""
    if isinstance(config, dict):
        cfg_hash = config_hash(config)
        config = validate_config(config)
    else:
        cfg_hash = config_hash(config.raw)
    eng = _Engine(config)
    world = initialize_scenario(config, seed)
    x = eng.pack(world)
    n_steps = config.n_steps
    dt = config.dt
    held = world.measurements
    track = check_trackability(config.sensing)

    n_log = n_steps // config.log_every + 1
    n = config.n_agents
    log = TrajectoryLog(
        t=np.zeros(n_log),
        e_norm=np.zeros((n_log, n)), zeta_tilde_norm=np.zeros((n_log, n)),
        eta_tilde_norm=np.zeros((n_log, n)), theta_norm=np.zeros((n_log, n)),
        u=np.zeros((n_log, n, 3)), sigma=np.zeros((n_log, n)),
        gamma=np.zeros((n_log, n)), phi=np.zeros((n_log, n)),
        r_ref=np.zeros(n_log), tau_ref=np.zeros(n_log),
    )
    diag = None
    if collect_diagnostics:
        diag = DiagnosticsLog(
            t=np.zeros(n_steps + 1),
            eta_tilde_agent=np.zeros((n_steps + 1, n, 3)),
            rho=np.zeros((n_steps + 1, n, 3)),
            zeta_tilde=np.zeros((n_steps + 1, n, 3)),
            e=np.zeros((n_steps + 1, n, 3)),
            u=np.zeros((n_steps + 1, n, 3)),
        )

    retractions = 0
    aborted = None
    log_idx = 0
    last_recorded = 0

    def record(step: int, x: np.ndarray):
        nonlocal log_idx
        t = step * dt
        ref, q0, q0d, q, qd, eta_hat, zeta_hat, w_aux, theta = eng.views(x)
        sigma = q[:, 0] if config.control_frame == "spherical" else None
        _, _, _, _, u, _ = eng.layer.derivs(held.eta, eta_hat, zeta_hat, w_aux,
                                            theta, sigma)
        err = diagnostic_errors(q0, q0d, q, qd, eta_hat, zeta_hat, w_aux,
                                config.gains, eng.layer.h_matrix)
        if step % config.log_every == 0:
            k = log_idx
            log.t[k] = t
            log.e_norm[k] = np.linalg.norm(err.e, axis=1)
            log.zeta_tilde_norm[k] = np.linalg.norm(err.zeta_tilde, axis=1)
            log.eta_tilde_norm[k] = np.linalg.norm(err.eta_tilde, axis=1)
            log.theta_norm[k] = np.linalg.norm(theta, axis=1)
            log.u[k] = u
            if config.control_frame == "spherical":
                log.sigma[k], log.gamma[k], log.phi[k] = q[:, 0], q[:, 1], q[:, 2]
            else:
                log.sigma[k], log.gamma[k], log.phi[k] = _lenient_spherical(q)
            log.r_ref[k] = ref[0]
            log.tau_ref[k] = ref[2]
            log_idx += 1
        if diag is not None:
            diag.t[step] = t
            diag.eta_tilde_agent[step] = held.eta - eta_hat
            diag.rho[step] = w_aux - config.gains.k34 * (held.eta - eta_hat)
            diag.zeta_tilde[step] = err.zeta_tilde
            diag.e[step] = err.e
            diag.u[step] = u

    def guard(step: int, x: np.ndarray):
        t = step * dt
        if not np.all(np.isfinite(x)):
            raise SingularityError(f"non-finite state at t={t:.3f} s")
        _, _, _, q, *_ = eng.views(x)
        if config.control_frame == "spherical":
            if np.any(q[:, 0] <= config.sigma_floor):
                raise SingularityError("range coordinate hit the floor")
            if np.any(np.abs(q[:, 2]) >= math.pi / 2 - config.pole_guard):
                raise SingularityError("elevation coordinate hit the pole guard")
        else:
            if np.any(np.linalg.norm(q, axis=1) <= config.sigma_floor):
                raise SingularityError("range hit the floor (collision with target)")

    # records happen at interval starts, after any measurement refresh, so the
    # logged (eta_tilde, rho, u) rows are exactly what the upcoming integration
    # interval consumes
    try:
        record(0, x)
        for step in range(n_steps):
            if step > 0:
                if step % config.meas_every == 0:
                    _, _, _, q, *_ = eng.views(x)
                    q0 = x[eng.offs[1]:eng.offs[2]]
                    held = sample_measurements(q, q0, config, seed,
                                               epoch=step // config.meas_every)
                record(step, x)
                last_recorded = step
            x = rk4_step(x, step * dt, dt, lambda t, s: eng.deriv(t, s, held.eta))
            theta_view = x[eng.offs[8]:].reshape(n, eng.p)
            retractions += eng.layer.retract_weights(theta_view)
            guard(step + 1, x)
        record(n_steps, x)
        last_recorded = n_steps
    except SingularityError as exc:
        aborted = {"t": (last_recorded + 1) * dt, "reason": str(exc)}

    if aborted is not None:
        for name in ("t", "e_norm", "zeta_tilde_norm", "eta_tilde_norm",
                     "theta_norm", "u", "sigma", "gamma", "phi", "r_ref", "tau_ref"):
            setattr(log, name, getattr(log, name)[:log_idx])
        if diag is not None:
            for name in ("t", "eta_tilde_agent", "rho", "zeta_tilde", "e", "u"):
                setattr(diag, name, getattr(diag, name)[:last_recorded + 1])

    notes = (TRANSCRIPTION_NOTE,)
    if not track.trackable:
        notes = notes + (f"scenario is not trackable (rank {track.rank} < 3); "
                         "regulation to the target is not expected",)
    return RunResult(config_hash=cfg_hash, seed=seed, log=log, aborted=aborted,
                     theta_retractions=retractions, trackable=track.trackable,
                     diagnostics=diag, notes=notes)


def _run_worker(args):
    raw, seed = args
    res = run_scenario(raw, seed)
    res.diagnostics = None
    return res


def run_many(raw_config: dict, seeds, max_workers: int | None = None) -> list:
    """Independent runs over seeds, fanned out across processes."""
    jobs = [(raw_config, int(s)) for s in seeds]
    if max_workers is not None and max_workers <= 1:
        return [_run_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_worker, jobs))


def settling_time(t: np.ndarray, x: np.ndarray, lo: float, hi: float) -> float:
    """First time after which the signal stays inside [lo, hi]; inf if never."""
    inside = (x >= lo) & (x <= hi)
    if not inside[-1]:
        return float("inf")
    # last excursion outside the band
    out = np.nonzero(~inside)[0]
    return float(t[out[-1] + 1]) if len(out) else float(t[0])


def summarize_metrics(log: TrajectoryLog, steady_window: float = 60.0,
                      band_frac: float = 0.05) -> dict:
    """Steady-state means/extremes, transient peaks, and settling times.

    The steady window is the trailing `steady_window` seconds; the settling
    band is steady_mean +/- band_frac * |initial - steady_mean| per agent.
    """
    if len(log.t) < 2:
        raise ConfigError("log too short to summarize")
    t_end = log.t[-1]
    if steady_window > t_end - log.t[0]:
        raise ConfigError("steady window longer than the log span")
    mask = log.t >= t_end - steady_window
    out = {}
    for name in ("e_norm", "zeta_tilde_norm", "eta_tilde_norm"):
        sig = getattr(log, name)
        steady_mean = sig[mask].mean(axis=0)
        half = band_frac * np.abs(sig[0] - steady_mean)
        settle = [settling_time(log.t, sig[:, i], steady_mean[i] - half[i],
                                steady_mean[i] + half[i])
                  for i in range(sig.shape[1])]
        out[name] = {
            "steady_mean": [float(v) for v in steady_mean],
            "steady_max": [float(v) for v in sig[mask].max(axis=0)],
            "peak": [float(v) for v in sig.max(axis=0)],
            "peak_time": [float(log.t[k]) for k in sig.argmax(axis=0)],
            "settling_time": [float(v) for v in settle],
        }
    return out


def empirical_omega_bar(config: ScenarioConfig, seed: int = 0,
                        duration: float | None = None) -> float:
    """Max radar-frame disturbance norm along an uncontrolled trajectory sweep.

    Propagates the configured initial-offset distribution open loop (all
    agents at once) and evaluates the frame-disturbance magnitude along the
    way; feeds the omega_bar entry of the bound estimates.
    """
    rng = np.random.default_rng([seed, _TAG_INIT])
    n = config.n_agents
    sig = rng.uniform(*config.radial_range, n)
    gam = rng.uniform(*config.angle_range, n)
    phi = rng.uniform(*config.angle_range, n)
    pos = np.stack([sig * np.cos(phi) * np.cos(gam),
                    sig * np.cos(phi) * np.sin(gam),
                    sig * np.sin(phi)], axis=1)
    vel = np.zeros((n, 3))
    orbit = orbital.periapsis_orbit(config.periapsis_alt, config.apoapsis_alt,
                                    config.inclination)
    ref = np.array([orbit.r, orbit.r_dot, orbit.tau, orbit.theta])
    mu = orbit.mu
    dur = duration if duration is not None else config.duration
    dt = config.dt

    def f(state):
        ref_s, p, v = state
        r, r_dot, tau, _ = ref_s
        tau_dot = -2.0 * r_dot * tau / r
        dref = np.array([r_dot, r * tau ** 2 - mu / r ** 2, tau_dot, tau])
        return (dref, v, orbital.rect_drift_arrays(p, v, r, tau, tau_dot, mu))

    worst = 0.0
    state = (ref, pos, vel)
    for step in range(int(round(dur / dt))):
        k1 = f(state)
        k2 = f(tuple(s + 0.5 * dt * d for s, d in zip(state, k1)))
        k3 = f(tuple(s + 0.5 * dt * d for s, d in zip(state, k2)))
        k4 = f(tuple(s + dt * d for s, d in zip(state, k3)))
        state = tuple(s + (dt / 6.0) * (a + 2 * b + 2 * c + d)
                      for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        if (step + 1) % config.meas_every:
            continue
        ref_s, p, v = state
        r, r_dot, tau = ref_s[0], ref_s[1], ref_s[2]
        tau_dot = -2.0 * r_dot * tau / r
        ref_obj = orbital.ReferenceOrbit(r=r, r_dot=r_dot, tau=tau, theta=ref_s[3],
                                         inclination=config.inclination)
        for i in range(n):
            try:
                s = orbital.rect_to_spherical(
                    orbital.RectRelState(*p[i], *v[i]),
                    config.sigma_floor, config.pole_guard)
            except SingularityError:
                continue
            w = orbital.disturbance_omega(ref_obj, tau_dot, s)
            worst = max(worst, float(np.linalg.norm(w)))
    return worst
