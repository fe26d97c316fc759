"""Per-agent estimation and control: measurement assembly, derivative-free
velocity filter, distributed observer, control law, and weight adaptation.

Information hygiene: every function here consumes only what a real agent
could hold -- its own states, its own sensing (y_i, C_i, b_i), and neighbor
broadcasts (relative positions d_{i,j}, effective controls, weight vectors).
Ground-truth quantities appear only in diagnostic_errors, which is the
simulation-side scorekeeper and is never on the agent update path.

The velocity filter avoids differentiating the measured position error: with
auxiliary state w,

    rho = w - (k3 + k4) eta_tilde,
    w'  = (1 - k3^2 - k3 k4) eta_tilde - (k3 + k4 + k5) rho,
    w(0) = (k3 + k4) eta_tilde(0)   (so rho(0) = 0),

which realizes rho' = eta_tilde - (k3 + k4) r_tilde - k5 rho with
r_tilde = eta_tilde' + k3 eta_tilde + rho, using measurable signals only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dnn
from .errors import ConfigError, ProtocolError
from .topology import SensingModel

__all__ = [
    "Gains",
    "ObserverState",
    "ObserverDerivs",
    "AgentMessages",
    "ErrorSignals",
    "compute_eta",
    "rho_value",
    "w_aux_deriv",
    "w_aux_init",
    "observer_derivs",
    "control_bracket",
    "control_input",
    "adaptation_derivs",
    "diagnostic_errors",
    "SwarmLayer",
]


@dataclass(frozen=True)
class Gains:
    """Controller/observer/filter gains and the learning rate.

    gamma is the (scalar) learning-rate coefficient: the matrix learning rate
    is gamma * I_p.  Stability requires strictly positive entries (the gain
    analyzer enforces that); the simulator also accepts zeros so open-loop
    and adaptation-off diagnostics stay expressible.
    """

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    gamma: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4", "k5", "k6", "gamma"):
            v = getattr(self, name)
            if v < 0:
                raise ConfigError(f"gain {name} must be nonnegative, got {v}")

    # composite constants of the filter/observer equations
    @property
    def k34(self) -> float:
        return self.k3 + self.k4

    @property
    def k345(self) -> float:
        return self.k3 + self.k4 + self.k5

    @property
    def w_eta_coef(self) -> float:
        return 1.0 - self.k3 ** 2 - self.k3 * self.k4

    @property
    def obs_eta_coef(self) -> float:
        return self.k3 ** 2 - 2.0

    @property
    def obs_rho_coef(self) -> float:
        return 2.0 * self.k3 + self.k4 + self.k5


@dataclass
class ObserverState:
    """One agent's observer/filter state (all zero-initialized except w_aux)."""

    eta_hat: np.ndarray
    zeta_hat: np.ndarray
    w_aux: np.ndarray


@dataclass(frozen=True)
class ObserverDerivs:
    eta_hat_dot: np.ndarray
    zeta_hat_dot: np.ndarray
    w_aux_dot: np.ndarray


@dataclass(frozen=True)
class AgentMessages:
    """One step's neighbor broadcasts, keyed by neighbor index.

    d: relative position of each neighbor (their position minus ours),
    gu: each neighbor's effective control (their g_j u_j),
    theta: each neighbor's weight vector.
    """

    neighbors: tuple
    d: dict
    gu: dict
    theta: dict

    def require(self, field: str) -> dict:
        table = getattr(self, field)
        missing = [j for j in self.neighbors if j not in table]
        if missing:
            raise ProtocolError(f"missing {field} message from neighbors {missing}")
        return table


def compute_eta(messages: AgentMessages, y_i: np.ndarray, c_matrix: np.ndarray,
                b_flag: int) -> np.ndarray:
    """Measured position-error aggregate: sum_j d_ij + b C^T y."""
    d = messages.require("d")
    eta = np.zeros(3)
    for j in messages.neighbors:
        eta += d[j]
    if b_flag:
        eta = eta + np.asarray(c_matrix).T @ np.asarray(y_i, dtype=float)
    return eta


def rho_value(w_aux: np.ndarray, eta_tilde: np.ndarray, gains: Gains) -> np.ndarray:
    """Filter output rho = w - (k3 + k4) eta_tilde (zero at t0 by w_aux_init)."""
    return np.asarray(w_aux) - gains.k34 * np.asarray(eta_tilde)


def w_aux_deriv(eta_tilde: np.ndarray, rho: np.ndarray, gains: Gains) -> np.ndarray:
    return gains.w_eta_coef * np.asarray(eta_tilde) - gains.k345 * np.asarray(rho)


def w_aux_init(eta_tilde_0: np.ndarray, gains: Gains) -> np.ndarray:
    """Initial auxiliary state that makes rho(t0) exactly zero."""
    return gains.k34 * np.asarray(eta_tilde_0, dtype=float)


def observer_derivs(obs: ObserverState, messages: AgentMessages, own_gu: np.ndarray,
                    eta_tilde: np.ndarray, rho: np.ndarray, gains: Gains,
                    b_flag: int, c_matrix: np.ndarray) -> ObserverDerivs:
    """Distributed observer right-hand side for one agent.

    zeta_hat' = (sum_j (g_j u_j - g_i u_i) - b C^T C g_i u_i)
                - (k3^2 - 2) eta_tilde - (2 k3 + k4 + k5) rho
    """
    gu = messages.require("gu")
    own_gu = np.asarray(own_gu, dtype=float)
    coupling = np.zeros(3)
    for j in messages.neighbors:
        coupling += gu[j] - own_gu
    if b_flag:
        c = np.asarray(c_matrix)
        coupling = coupling - c.T @ (c @ own_gu)
    zeta_hat_dot = (coupling - gains.obs_eta_coef * np.asarray(eta_tilde)
                    - gains.obs_rho_coef * np.asarray(rho))
    return ObserverDerivs(
        eta_hat_dot=np.asarray(obs.zeta_hat, dtype=float).copy(),
        zeta_hat_dot=zeta_hat_dot,
        w_aux_dot=w_aux_deriv(eta_tilde, rho, gains),
    )


def control_bracket(phi_out: np.ndarray, eta: np.ndarray, zeta_hat: np.ndarray,
                    eta_tilde: np.ndarray, rho: np.ndarray, gains: Gains) -> np.ndarray:
    """Effective control g u = Phi + k2 (k1 eta + zeta_hat - k3 eta_tilde - rho)."""
    return np.asarray(phi_out) + gains.k2 * (
        gains.k1 * np.asarray(eta) + np.asarray(zeta_hat)
        - gains.k3 * np.asarray(eta_tilde) - np.asarray(rho)
    )


def control_input(eta: np.ndarray, zeta_hat: np.ndarray, eta_tilde: np.ndarray,
                  rho: np.ndarray, theta_hat: np.ndarray, sigma: float,
                  gains: Gains, arch: dnn.Architecture) -> np.ndarray:
    """Radar-coordinate control u = g^-1(sigma) [Phi(kappa, theta) + k2(...)].

    kappa stacks the measured position aggregate with the velocity estimate.
    """
    from .orbital import control_effectiveness_g_inv

    kappa = np.concatenate([np.asarray(eta, dtype=float),
                            np.asarray(zeta_hat, dtype=float)])
    phi_out, _ = dnn.forward(kappa, theta_hat, arch)
    bracket = control_bracket(phi_out, eta, zeta_hat, eta_tilde, rho, gains)
    return control_effectiveness_g_inv(sigma) @ bracket


def adaptation_derivs(theta_hat: np.ndarray, neighbor_thetas: list, eta: np.ndarray,
                      zeta_hat: np.ndarray, gains: Gains, theta_bar: float,
                      arch: dnn.Architecture, eps_proj: float = 0.1) -> np.ndarray:
    """Projected weight update for one agent.

    raw = gamma (J^T (zeta_hat + k1 eta) - k6 (theta - sum_j (theta_j - theta)))
    with J the output/weight Jacobian at the current (kappa, theta); the
    network Jacobian is applied transposed so the drive conforms with the
    weight dimension.
    """
    kappa = np.concatenate([np.asarray(eta, dtype=float),
                            np.asarray(zeta_hat, dtype=float)])
    _, trace = dnn.forward(kappa, theta_hat, arch)
    drive = dnn.vjp_weights(np.asarray(zeta_hat) + gains.k1 * np.asarray(eta),
                            trace, arch)
    consensus = len(neighbor_thetas) * np.asarray(theta_hat, dtype=float)
    for th_j in neighbor_thetas:
        consensus = consensus - np.asarray(th_j, dtype=float)
    raw = gains.gamma * (drive - gains.k6 * (np.asarray(theta_hat) + consensus))
    return dnn.smooth_projection(raw, theta_hat, theta_bar, eps_proj)


@dataclass(frozen=True)
class ErrorSignals:
    """Truth-side error signals, stacked (N, 3) except theta-free scalars.

    e: tracking errors; r: filtered tracking errors; eta/zeta: noise-free
    position aggregate and its analytic rate; eta_tilde/zeta_tilde: observer
    errors; r_tilde: filtered estimation errors; rho: filter outputs.
    """

    e: np.ndarray
    r: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    eta_tilde: np.ndarray
    zeta_tilde: np.ndarray
    r_tilde: np.ndarray
    rho: np.ndarray


def diagnostic_errors(q0: np.ndarray, q0_dot: np.ndarray, q: np.ndarray,
                      q_dot: np.ndarray, eta_hat: np.ndarray, zeta_hat: np.ndarray,
                      w_aux: np.ndarray, gains: Gains, h_matrix: np.ndarray) -> ErrorSignals:
    """All error signals from ground truth (simulation-side only).

    Uses the ensemble identities eta = H e and zeta = H e' (H is constant), so
    zeta comes from truth velocities, never from numerical differentiation.
    """
    n = q.shape[0]
    e = np.asarray(q0)[None, :] - np.asarray(q, dtype=float)
    e_dot = np.asarray(q0_dot)[None, :] - np.asarray(q_dot, dtype=float)
    r = e_dot + gains.k1 * e
    eta = (h_matrix @ e.reshape(-1)).reshape(n, 3)
    zeta = (h_matrix @ e_dot.reshape(-1)).reshape(n, 3)
    eta_tilde = eta - np.asarray(eta_hat, dtype=float)
    zeta_tilde = zeta - np.asarray(zeta_hat, dtype=float)
    rho = np.asarray(w_aux, dtype=float) - gains.k34 * eta_tilde
    r_tilde = zeta_tilde + gains.k3 * eta_tilde + rho
    return ErrorSignals(e=e, r=r, eta=eta, zeta=zeta, eta_tilde=eta_tilde,
                        zeta_tilde=zeta_tilde, r_tilde=r_tilde, rho=rho)


class SwarmLayer:
    """Batched agent-side update law for the whole swarm.

    Everything here is the ensemble form of the per-agent operations above
    (the test suite pins the two paths to each other).  The layer sees only
    agent-visible inputs: the held measurement aggregate eta, the observer and
    weight states, and (in the radar control frame) each agent's own range.

    control_frame selects the coordinates the agents work in:
      'rect'      -- homogeneous meter-valued coordinates, identity control
                     effectiveness (the default; matches the rectangular
                     dynamics form).
      'spherical' -- radar coordinates with g = diag(1, 1/sigma, 1/sigma).
    """

    def __init__(self, sensing: SensingModel, laplacian: np.ndarray, gains: Gains,
                 arch: dnn.Architecture, theta_bar: float, eps_proj: float = 0.1,
                 control_frame: str = "rect"):
        if control_frame not in ("rect", "spherical"):
            raise ConfigError(f"unknown control frame {control_frame!r}")
        from .topology import build_interaction_matrix

        self.n = sensing.n_agents
        self.gains = gains
        self.net = dnn.BatchedNet(arch)
        self.theta_bar = float(theta_bar)
        self.eps_proj = float(eps_proj)
        self.control_frame = control_frame
        self.h_matrix = build_interaction_matrix(laplacian, sensing)
        self.lap_plus_i = np.asarray(laplacian, dtype=float) + np.eye(self.n)

    def derivs(self, eta_held: np.ndarray, eta_hat: np.ndarray, zeta_hat: np.ndarray,
               w_aux: np.ndarray, theta: np.ndarray, sigma: np.ndarray | None = None):
        """One evaluation of every agent's update law.

        Returns (eta_hat', zeta_hat', w_aux', theta', u, gu) with u the applied
        control accelerations and gu the broadcast effective controls.
        """
        g = self.gains
        eta_tilde = eta_held - eta_hat
        rho = w_aux - g.k34 * eta_tilde
        kappa = np.concatenate([eta_held, zeta_hat], axis=1)
        phi_out, trace = self.net.forward(theta, kappa)
        gu = phi_out + g.k2 * (g.k1 * eta_held + zeta_hat - g.k3 * eta_tilde - rho)
        if self.control_frame == "rect":
            u = gu
        else:
            u = gu.copy()
            u[:, 1] *= sigma
            u[:, 2] *= sigma
        h_gu = (self.h_matrix @ gu.reshape(-1)).reshape(self.n, 3)
        zeta_hat_dot = -h_gu - g.obs_eta_coef * eta_tilde - g.obs_rho_coef * rho
        w_dot = g.w_eta_coef * eta_tilde - g.k345 * rho
        drive = self.net.vjp(trace, zeta_hat + g.k1 * eta_held)
        raw = g.gamma * (drive - g.k6 * (self.lap_plus_i @ theta))
        theta_dot = self.net.project(raw, theta, self.theta_bar, self.eps_proj)
        return zeta_hat.copy(), zeta_hat_dot, w_dot, theta_dot, u, gu

    def retract_weights(self, theta: np.ndarray) -> int:
        """Rescale any weight vector outside the projection shell back onto it.

        The continuous-time law keeps ||theta|| inside the shell exactly; a
        discrete integrator can overshoot during fast transients, so runs
        enforce the invariant after each step.  Returns how many rows moved.
        """
        shell = dnn.projection_shell_radius(self.theta_bar, self.eps_proj)
        norms = np.linalg.norm(theta, axis=1)
        over = norms > shell
        if np.any(over):
            theta[over] *= (shell / norms[over])[:, None]
        return int(np.count_nonzero(over))
