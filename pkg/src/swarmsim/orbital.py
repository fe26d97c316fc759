"""Reference-orbit and relative-motion dynamics in two equivalent forms.

The plant is the standard nonlinear relative motion of a chaser about a
Keplerian reference orbit (radius r, angular rate tau), written either in
rectangular radial/in-track/cross-track coordinates or in radar coordinates
(range sigma, azimuth gamma, elevation phi).  The rectangular form is the
primary source of truth; the radar-coordinate drift and frame-disturbance
terms below are the exact transformation of it, and the test suite holds the
two representations to each other.

Two terms of the commonly quoted radar-coordinate equations do not survive
that cross-check and are corrected here (see drift_f_printed /
disturbance_omega_printed for the verbatim variants and the tests that
measure the discrepancy):

  * the mu/(r^2 sigma) sin(gamma) sec(phi) term of the azimuth drift enters
    with a minus sign;
  * the elevation frame term carries the factor sin(phi) cos(phi).

Perturbations (J2 oblateness and exponential-atmosphere drag) are standard
textbook models applied differentially in the local frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularityError

__all__ = [
    "MU_EARTH",
    "R_EARTH",
    "J2_EARTH",
    "SIGMA_FLOOR",
    "POLE_GUARD",
    "ReferenceOrbit",
    "SpacecraftParams",
    "SphericalRelState",
    "RectRelState",
    "reference_derivs",
    "propagate_reference",
    "periapsis_orbit",
    "spherical_to_rect",
    "rect_to_spherical",
    "position_jacobian",
    "spherical_accel_to_rect",
    "rect_accel_to_spherical",
    "rect_relative_accel",
    "rect_drift_arrays",
    "drift_f",
    "drift_f_printed",
    "disturbance_omega",
    "disturbance_omega_printed",
    "spherical_drift_arrays",
    "control_effectiveness_g",
    "control_effectiveness_g_inv",
    "atmosphere_density",
    "drag_accel",
    "drag_accel_arrays",
    "j2_accel",
    "j2_accel_arrays",
    "target_accel_f0",
    "propagate_relative",
]

MU_EARTH = 3.986004418e14      # m^3/s^2
R_EARTH = 6.371e6              # m
J2_EARTH = 1.08263e-3
RHO0 = 3.614e-11               # kg/m^3 at H0
H0_ALT = 300e3                 # m
H_SCALE = 50e3                 # m

SIGMA_FLOOR = 1e-3             # m; below this the radar frame is singular
POLE_GUARD = 1e-6              # rad; |phi| must stay below pi/2 - guard


@dataclass
class ReferenceOrbit:
    """Reference (target) orbit state: radius, radial rate, angular rate.

    theta is the in-plane angle from periapsis (used only to resolve the J2
    frame), inclination only tilts that frame; neither enters the two-body
    relative dynamics.
    """

    r: float
    r_dot: float
    tau: float
    theta: float = 0.0
    mu: float = MU_EARTH
    inclination: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise SingularityError(f"orbital radius must be positive, got {self.r}")

    @property
    def tau_dot(self) -> float:
        return -2.0 * self.r_dot * self.tau / self.r


@dataclass(frozen=True)
class SpacecraftParams:
    """Ballistic properties and perturbation toggles for one spacecraft."""

    mass: float
    area: float
    drag_coeff: float = 2.2
    j2_enabled: bool = False
    drag_enabled: bool = False

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError(f"mass must be positive, got {self.mass}")
        if self.area < 0 or self.drag_coeff < 0:
            raise ConfigError("area and drag coefficient must be nonnegative")


@dataclass(frozen=True)
class SphericalRelState:
    sigma: float
    gamma: float
    phi: float
    sigma_dot: float = 0.0
    gamma_dot: float = 0.0
    phi_dot: float = 0.0

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.sigma, self.gamma, self.phi])

    @property
    def rates(self) -> np.ndarray:
        return np.array([self.sigma_dot, self.gamma_dot, self.phi_dot])


@dataclass(frozen=True)
class RectRelState:
    x: float
    y: float
    z: float
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def vel(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz])


# ---------------------------------------------------------------------------
# reference orbit
# ---------------------------------------------------------------------------

def reference_derivs(orbit: ReferenceOrbit) -> tuple:
    """(r_ddot, tau_dot) = (r tau^2 - mu/r^2, -2 r_dot tau / r)."""
    if orbit.r <= 0:
        raise SingularityError(f"orbital radius must be positive, got {orbit.r}")
    r_ddot = orbit.r * orbit.tau ** 2 - orbit.mu / orbit.r ** 2
    return r_ddot, orbit.tau_dot


def periapsis_orbit(periapsis_alt: float, apoapsis_alt: float,
                    inclination: float = 0.0, mu: float = MU_EARTH,
                    r_body: float = R_EARTH) -> ReferenceOrbit:
    """Orbit state at periapsis; speed from vis-viva with a = mean of the apse radii."""
    rp = r_body + periapsis_alt
    ra = r_body + apoapsis_alt
    a = 0.5 * (rp + ra)
    vp = math.sqrt(mu * (2.0 / rp - 1.0 / a))
    return ReferenceOrbit(r=rp, r_dot=0.0, tau=vp / rp, theta=0.0,
                          mu=mu, inclination=inclination)


def propagate_reference(orbit: ReferenceOrbit, duration: float, dt: float) -> ReferenceOrbit:
    """Fixed-step RK4 propagation of (r, r_dot, tau, theta)."""
    def f(s):
        r, r_dot, tau, _ = s
        if r <= 0:
            raise SingularityError("reference radius collapsed during propagation")
        return np.array([r_dot, r * tau ** 2 - orbit.mu / r ** 2,
                         -2.0 * r_dot * tau / r, tau])

    s = np.array([orbit.r, orbit.r_dot, orbit.tau, orbit.theta])
    n = int(round(duration / dt))
    for _ in range(n):
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return ReferenceOrbit(r=s[0], r_dot=s[1], tau=s[2], theta=s[3],
                          mu=orbit.mu, inclination=orbit.inclination)


# ---------------------------------------------------------------------------
# coordinate transforms
# ---------------------------------------------------------------------------

def spherical_to_rect(s: SphericalRelState) -> RectRelState:
    """Radar (range/azimuth/elevation) state to rectangular state."""
    sg, cg = math.sin(s.gamma), math.cos(s.gamma)
    sp, cp = math.sin(s.phi), math.cos(s.phi)
    x = s.sigma * cp * cg
    y = s.sigma * cp * sg
    z = s.sigma * sp
    vx = s.sigma_dot * cp * cg - s.sigma * s.phi_dot * sp * cg - s.sigma * s.gamma_dot * cp * sg
    vy = s.sigma_dot * cp * sg - s.sigma * s.phi_dot * sp * sg + s.sigma * s.gamma_dot * cp * cg
    vz = s.sigma_dot * sp + s.sigma * s.phi_dot * cp
    return RectRelState(x, y, z, vx, vy, vz)


def rect_to_spherical(r: RectRelState, sigma_floor: float = SIGMA_FLOOR,
                      pole_guard: float = POLE_GUARD) -> SphericalRelState:
    """Rectangular state to radar state; guards the range floor and the poles."""
    sigma = math.sqrt(r.x ** 2 + r.y ** 2 + r.z ** 2)
    if sigma <= sigma_floor:
        raise SingularityError(f"range {sigma:.3e} m at or below floor {sigma_floor:.3e} m")
    phi = math.asin(max(-1.0, min(1.0, r.z / sigma)))
    if abs(phi) >= math.pi / 2 - pole_guard:
        raise SingularityError(f"elevation {phi:.6f} rad within pole guard")
    gamma = math.atan2(r.y, r.x)
    rho_xy2 = r.x ** 2 + r.y ** 2
    sigma_dot = (r.x * r.vx + r.y * r.vy + r.z * r.vz) / sigma
    gamma_dot = (r.x * r.vy - r.y * r.vx) / rho_xy2
    phi_dot = (r.vz - sigma_dot * math.sin(phi)) / (sigma * math.cos(phi))
    return SphericalRelState(sigma, gamma, phi, sigma_dot, gamma_dot, phi_dot)


def position_jacobian(s: SphericalRelState) -> np.ndarray:
    """T = d(x,y,z)/d(sigma,gamma,phi)."""
    sg, cg = math.sin(s.gamma), math.cos(s.gamma)
    sp, cp = math.sin(s.phi), math.cos(s.phi)
    return np.array([
        [cp * cg, -s.sigma * cp * sg, -s.sigma * sp * cg],
        [cp * sg, s.sigma * cp * cg, -s.sigma * sp * sg],
        [sp, 0.0, s.sigma * cp],
    ])


def spherical_accel_to_rect(s: SphericalRelState, accel_sph: np.ndarray) -> np.ndarray:
    """Map radar-coordinate accelerations (sdd, gdd, pdd) to rectangular ones.

    Uses the orthonormal local basis (range, azimuth, elevation): the basis
    components of the rectangular acceleration are the coordinate
    accelerations plus the usual curvature terms.
    """
    sdd, gdd, pdd = accel_sph
    sig, sd, gd, pd = s.sigma, s.sigma_dot, s.gamma_dot, s.phi_dot
    sp, cp = math.sin(s.phi), math.cos(s.phi)
    a_r = sdd - sig * pd ** 2 - sig * gd ** 2 * cp ** 2
    a_g = sig * gdd * cp + 2.0 * sd * gd * cp - 2.0 * sig * gd * pd * sp
    a_p = sig * pdd + 2.0 * sd * pd + sig * gd ** 2 * sp * cp
    sg, cg = math.sin(s.gamma), math.cos(s.gamma)
    e_r = np.array([cp * cg, cp * sg, sp])
    e_g = np.array([-sg, cg, 0.0])
    e_p = np.array([-sp * cg, -sp * sg, cp])
    return a_r * e_r + a_g * e_g + a_p * e_p


def rect_accel_to_spherical(s: SphericalRelState, accel_rect: np.ndarray) -> np.ndarray:
    """Instantaneous acceleration increment from rectangular to radar coordinates.

    This is the inverse position-Jacobian application (no curvature terms):
    adding a to the rectangular acceleration adds T^-1 a to (sdd, gdd, pdd).
    """
    return np.linalg.solve(position_jacobian(s), np.asarray(accel_rect, dtype=float))


# ---------------------------------------------------------------------------
# rectangular dynamics
# ---------------------------------------------------------------------------

def rect_drift_arrays(q: np.ndarray, qd: np.ndarray, r: float, tau: float,
                      tau_dot: float, mu: float) -> np.ndarray:
    """Two-body relative acceleration (frame + gravity-difference terms), batched.

    q, qd are (..., 3) radial/in-track/cross-track positions and rates.
    """
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    denom = ((r + x) ** 2 + y ** 2 + z ** 2) ** 1.5
    if np.any(denom <= 0.0):
        raise SingularityError("relative state collided with the central body")
    ax = 2.0 * tau * qd[..., 1] + tau_dot * y + tau ** 2 * x + mu / r ** 2 - mu * (r + x) / denom
    ay = -2.0 * tau * qd[..., 0] - tau_dot * x + tau ** 2 * y - mu * y / denom
    az = -mu * z / denom
    return np.stack([ax, ay, az], axis=-1)


def rect_relative_accel(state: RectRelState, orbit: ReferenceOrbit,
                        params: SpacecraftParams, u: np.ndarray | None = None) -> np.ndarray:
    """Full rectangular relative acceleration incl. perturbations and control."""
    acc = rect_drift_arrays(state.pos, state.vel, orbit.r, orbit.tau,
                            orbit.tau_dot, orbit.mu)
    if params.j2_enabled:
        acc = acc + j2_accel(state, orbit)
    if params.drag_enabled:
        acc = acc + drag_accel(state.vel, params, orbit.r - R_EARTH)
    if u is not None:
        acc = acc + np.asarray(u, dtype=float)
    return acc


# ---------------------------------------------------------------------------
# radar-coordinate dynamics
# ---------------------------------------------------------------------------

def _check_spherical_domain(sigma, phi, sigma_floor, pole_guard):
    if np.any(np.asarray(sigma) <= sigma_floor):
        raise SingularityError(f"range at or below floor {sigma_floor:.3e} m")
    if np.any(np.abs(np.asarray(phi)) >= math.pi / 2 - pole_guard):
        raise SingularityError("elevation within pole guard")


def spherical_drift_arrays(pos: np.ndarray, rates: np.ndarray, r: float, tau: float,
                           tau_dot: float, mu: float,
                           sigma_floor: float = SIGMA_FLOOR,
                           pole_guard: float = POLE_GUARD) -> tuple:
    """(drift, frame disturbance) of the radar-coordinate dynamics, batched.

    pos = (..., 3) of (sigma, gamma, phi); rates likewise.  Both pieces are the
    exact transformation of the rectangular form (two corrected terms; see the
    module docstring).
    """
    sig, gam, phi = pos[..., 0], pos[..., 1], pos[..., 2]
    sd, gd, pd = rates[..., 0], rates[..., 1], rates[..., 2]
    _check_spherical_domain(sig, phi, sigma_floor, pole_guard)
    cg, sg = np.cos(gam), np.sin(gam)
    cp, sp = np.cos(phi), np.sin(phi)
    rho3 = (r ** 2 + sig ** 2 + 2.0 * r * sig * cg * cp) ** 1.5
    f_sig = sig * pd ** 2 - mu * (r * cg * cp + sig) / rho3 + (mu / r ** 2) * cg * cp
    f_gam = mu * r * sg / (sig * cp * rho3) - (mu / (r ** 2 * sig)) * sg / cp
    f_phi = (-2.0 * sd * pd / sig - (mu / (r ** 2 * sig)) * cg * sp
             + mu * r * cg * sp / (sig * rho3))
    w_sig = (tau ** 2 + 2.0 * tau * gd + gd ** 2) * sig * cp ** 2
    w_gam = 2.0 * (tau + gd) * pd * np.tan(phi) - tau_dot - 2.0 * (tau + gd) * sd / sig
    w_phi = -(tau + gd) ** 2 * sp * cp
    return (np.stack([f_sig, f_gam, f_phi], axis=-1),
            np.stack([w_sig, w_gam, w_phi], axis=-1))


def drift_f(s: SphericalRelState, orbit: ReferenceOrbit,
            params: SpacecraftParams) -> np.ndarray:
    """Radar-coordinate drift [f_sigma, f_gamma, f_phi] incl. perturbations.

    Perturbation accelerations are evaluated in the rectangular frame and
    mapped through the inverse position Jacobian.
    """
    f, _ = spherical_drift_arrays(s.pos, s.rates, orbit.r, orbit.tau,
                                  orbit.tau_dot, orbit.mu)
    pert = np.zeros(3)
    rect = spherical_to_rect(s)
    if params.j2_enabled:
        pert = pert + j2_accel(rect, orbit)
    if params.drag_enabled:
        pert = pert + drag_accel(rect.vel, params, orbit.r - R_EARTH)
    if np.any(pert):
        f = f + rect_accel_to_spherical(s, pert)
    return f


def drift_f_printed(s: SphericalRelState, orbit: ReferenceOrbit) -> np.ndarray:
    """Verbatim transcription of the quoted drift (azimuth gravity sign flipped).

    Kept for the transcription-discrepancy diagnostic; the rectangular oracle
    rules this form out.
    """
    f = spherical_drift_arrays(s.pos, s.rates, orbit.r, orbit.tau,
                               orbit.tau_dot, orbit.mu)[0]
    correction = 2.0 * (orbit.mu / (orbit.r ** 2 * s.sigma)) * math.sin(s.gamma) / math.cos(s.phi)
    return f + np.array([0.0, correction, 0.0])


def disturbance_omega(orbit: ReferenceOrbit, tau_dot: float,
                      s: SphericalRelState) -> np.ndarray:
    """Rotating-frame disturbance [w_sigma, w_gamma, w_phi] of the radar form."""
    _, w = spherical_drift_arrays(s.pos, s.rates, orbit.r, orbit.tau,
                                  tau_dot, orbit.mu)
    return w


def disturbance_omega_printed(orbit: ReferenceOrbit, tau_dot: float,
                              s: SphericalRelState) -> np.ndarray:
    """Verbatim transcription (elevation term missing its sin*cos factor)."""
    w = disturbance_omega(orbit, tau_dot, s)
    w[2] = -0.5 * (orbit.tau + s.gamma_dot) ** 2
    return w


def control_effectiveness_g(sigma: float, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """diag(1, 1/sigma, 1/sigma): thrust-to-coordinate-acceleration map."""
    if sigma <= sigma_floor:
        raise SingularityError(f"range {sigma:.3e} m at or below floor {sigma_floor:.3e} m")
    return np.diag([1.0, 1.0 / sigma, 1.0 / sigma])


def control_effectiveness_g_inv(sigma: float, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """diag(1, sigma, sigma); exists for any range above the floor."""
    if sigma <= sigma_floor:
        raise SingularityError(f"range {sigma:.3e} m at or below floor {sigma_floor:.3e} m")
    return np.diag([1.0, sigma, sigma])


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------

def atmosphere_density(altitude: float) -> float:
    """Exponential atmosphere rho0 * exp(-(alt - h0)/Hs)."""
    return RHO0 * math.exp(-(altitude - H0_ALT) / H_SCALE)


def drag_accel_arrays(vel: np.ndarray, cd_area_over_mass: np.ndarray,
                      altitude: float) -> np.ndarray:
    """-(1/2) rho Cd (A/m) |v| v on the relative velocity, batched.

    cd_area_over_mass is Cd*A/m per spacecraft, broadcast against vel (..., 3).
    """
    rho = atmosphere_density(altitude)
    speed = np.linalg.norm(vel, axis=-1, keepdims=True)
    return -0.5 * rho * np.asarray(cd_area_over_mass)[..., None] * speed * vel


def drag_accel(rect_rates: np.ndarray, params: SpacecraftParams,
               altitude: float) -> np.ndarray:
    """Differential drag acceleration for one spacecraft."""
    v = np.asarray(rect_rates, dtype=float)
    return drag_accel_arrays(v, params.drag_coeff * params.area / params.mass, altitude)


def _lvlh_basis(orbit: ReferenceOrbit) -> np.ndarray:
    """Columns are the radial / in-track / cross-track unit vectors in ECI."""
    ct, st = math.cos(orbit.theta), math.sin(orbit.theta)
    ci, si = math.cos(orbit.inclination), math.sin(orbit.inclination)
    # u_r = (ct, st ci, st si), u_h = (0, -si, ci), u_t = u_h x u_r written out
    return np.array([
        [ct, -st, 0.0],
        [st * ci, ct * ci, -si],
        [st * si, ct * si, ci],
    ])


def _j2_eci(pos: np.ndarray, mu: float) -> np.ndarray:
    """Point J2 acceleration in ECI, batched over (..., 3)."""
    r2 = np.sum(pos * pos, axis=-1, keepdims=True)
    r = np.sqrt(r2)
    zr2 = pos[..., 2:3] ** 2 / r2
    coef = -1.5 * J2_EARTH * mu * R_EARTH ** 2 / (r2 * r2 * r)
    fac = 1.0 - 5.0 * zr2 + np.array([0.0, 0.0, 2.0])
    return coef * fac * pos


def j2_accel_arrays(q: np.ndarray, orbit: ReferenceOrbit) -> np.ndarray:
    """Differential J2 acceleration in the local frame, batched over (..., 3)."""
    basis = _lvlh_basis(orbit)
    ref_eci = orbit.r * basis[:, 0]
    stacked = np.concatenate([q @ basis.T + ref_eci, ref_eci[None, :]], axis=0)
    acc = _j2_eci(stacked, orbit.mu)
    return (acc[:-1] - acc[-1]) @ basis


def j2_accel(rect: RectRelState, orbit: ReferenceOrbit) -> np.ndarray:
    """Differential J2 acceleration for one spacecraft."""
    return j2_accel_arrays(rect.pos[None, :], orbit)[0]


# ---------------------------------------------------------------------------
# target (defunct spacecraft) dynamics
# ---------------------------------------------------------------------------

TARGET_MODES = ("stationary", "bounded_drift")


def target_accel_f0(q0: np.ndarray, q0_dot: np.ndarray, mode: str,
                    t: float = 0.0, params: dict | None = None) -> np.ndarray:
    """Acceleration of the defunct spacecraft in the relative frame.

    stationary: the defunct rides the reference orbit (zero acceleration).
    bounded_drift: a damped second-order wander with a sinusoidal bias,
        q0'' = -w0^2 q0 - 2 xi w0 q0' + B sin(wb t + phase), whose response
        amplitude is bounded for any B (keeps the boundedness assumptions
        checkable in closed form).
    """
    if mode == "stationary":
        return np.zeros(3)
    if mode == "bounded_drift":
        p = params or {}
        w0 = p.get("omega0", 0.3)
        xi = p.get("xi", 0.7)
        amp = p.get("bias_amplitude", 1.26)
        wb = p.get("bias_freq", 0.3)
        phases = np.asarray(p.get("bias_phases", (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)))
        bias = amp * np.sin(wb * t + phases)
        return -w0 ** 2 * np.asarray(q0) - 2.0 * xi * w0 * np.asarray(q0_dot) + bias
    raise ConfigError(f"unknown target mode {mode!r}; expected one of {TARGET_MODES}")


# ---------------------------------------------------------------------------
# open-loop propagation (representation cross-check oracle)
# ---------------------------------------------------------------------------

def propagate_relative(state0: RectRelState, orbit0: ReferenceOrbit,
                       duration: float, dt: float, frame: str = "rect",
                       sample_every: int = 1) -> tuple:
    """Propagate one uncontrolled, unperturbed chaser; return (t, rect positions).

    frame selects the integration representation ('rect' or 'spherical'); the
    output is always rectangular so the two can be compared directly.
    """
    if frame not in ("rect", "spherical"):
        raise ConfigError(f"unknown frame {frame!r}")
    n = int(round(duration / dt))
    ref = np.array([orbit0.r, orbit0.r_dot, orbit0.tau, orbit0.theta])
    mu = orbit0.mu

    if frame == "rect":
        rel = np.concatenate([state0.pos, state0.vel])
    else:
        s0 = rect_to_spherical(state0)
        rel = np.concatenate([s0.pos, s0.rates])

    def f(ref_s, rel_s):
        r, r_dot, tau, _ = ref_s
        tau_dot = -2.0 * r_dot * tau / r
        dref = np.array([r_dot, r * tau ** 2 - mu / r ** 2, tau_dot, tau])
        pos, rates = rel_s[:3], rel_s[3:]
        if frame == "rect":
            acc = rect_drift_arrays(pos, rates, r, tau, tau_dot, mu)
        else:
            fd, wd = spherical_drift_arrays(pos, rates, r, tau, tau_dot, mu)
            acc = fd + wd
        return dref, np.concatenate([rates, acc])

    times = [0.0]
    rect_pos = [state0.pos.copy()]
    for i in range(n):
        k1r, k1 = f(ref, rel)
        k2r, k2 = f(ref + 0.5 * dt * k1r, rel + 0.5 * dt * k1)
        k3r, k3 = f(ref + 0.5 * dt * k2r, rel + 0.5 * dt * k2)
        k4r, k4 = f(ref + dt * k3r, rel + dt * k3)
        ref = ref + (dt / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        rel = rel + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % sample_every == 0:
            times.append((i + 1) * dt)
            if frame == "rect":
                rect_pos.append(rel[:3].copy())
            else:
                s = SphericalRelState(*rel[:3], *rel[3:])
                rect_pos.append(spherical_to_rect(s).pos)
    return np.asarray(times), np.asarray(rect_pos)
