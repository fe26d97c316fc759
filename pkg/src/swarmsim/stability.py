"""Gain-feasibility analysis: closed-form stability constants and envelopes.

Turns user-supplied (or sampled) bound estimates plus the topology spectra
into the six damping margins alpha_1..alpha_6, the Lyapunov sandwich
constants lambda_1..lambda_3, the disturbance level delta, the uniform
ultimate bound and stabilizing-set radii, and the theoretical decay envelope.
The analyzer is deliberately decoupled from the simulator: a report is
produced for any gains, and sign violations are stated rather than blocking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .agents import Gains
from .errors import ContractError

__all__ = [
    "BoundEstimates",
    "GainReport",
    "compute_alphas",
    "compute_delta",
    "compute_lambdas",
    "lambda3",
    "sets_and_feasibility",
    "FeasibilitySets",
    "envelope",
    "LipschitzEstimate",
    "estimate_lipschitz",
    "estimate_l_phi",
    "build_gain_report",
]


@dataclass(frozen=True)
class BoundEstimates:
    """Positive constants bounding the uncertainty terms.

    lipschitz_L: Lipschitz constant of the drift functions over the analysis
        domain; l_phi: bound on the network weight-Jacobian norm; d_bound:
        sup-norm of the model-mismatch drift; omega_bar / omega_dot_bar:
        frame-disturbance magnitude and rate bounds; q0_bar / q0_dot_bar:
        target excursion bounds; theta_bar: ideal-weight bound; eps_bar:
        approximation-error bound; m_bound: weight-Hessian spectral bound;
        chi: analysis-domain radius; n_agents: swarm size.
    """

    lipschitz_L: float
    l_phi: float
    d_bound: float
    omega_bar: float
    omega_dot_bar: float
    q0_bar: float
    q0_dot_bar: float
    theta_bar: float
    eps_bar: float
    m_bound: float
    chi: float
    n_agents: int

    def __post_init__(self):
        for name in ("lipschitz_L", "l_phi", "d_bound", "omega_bar", "omega_dot_bar",
                     "q0_bar", "q0_dot_bar", "theta_bar", "eps_bar", "m_bound", "chi"):
            if getattr(self, name) < 0:
                raise ContractError(f"bound {name} must be nonnegative")
        if self.n_agents < 1:
            raise ContractError("n_agents must be positive")


def compute_alphas(gains: Gains, h_spectrum: tuple, j_spectrum: tuple,
                   bounds: BoundEstimates) -> np.ndarray:
    """The six quadratic-form damping margins, verbatim closed forms."""
    h_lo, h_hi = h_spectrum
    j_lo, _ = j_spectrum
    L = bounds.lipschitz_L
    lp = bounds.l_phi
    n = bounds.n_agents
    a1 = 2.0 - 2.0 * h_hi * lp - 4.0 * L * n * h_hi * (h_hi + 1.0)
    a2 = (gains.k2 * h_lo - gains.k2
          - L * n * (gains.k3 + 2.0 * (2.0 * h_hi + 1.0)
                     + (1.0 + gains.k1) * (2.0 * h_hi + 1.0) + 2.0)
          - lp * (1.0 + h_hi) - 2.0)
    a3 = 2.0 - lp - L * n * (h_hi + 1.0)
    a4 = (gains.k4 - gains.k2
          - L * n * ((gains.k3 + 2.0 + (1.0 + gains.k1) * (2.0 * h_hi + 1.0)) + 1.0) * h_hi
          - lp)
    a5 = 2.0 * gains.k5 - L * n * (h_hi + 1.0) - lp
    a6 = gains.k6 * j_lo - lp * (gains.k3 + 3.0 * h_hi + 3.0)
    return np.array([a1, a2, a3, a4, a5, a6])


def compute_delta(gains: Gains, h_spectrum: tuple, j_spectrum: tuple,
                  bounds: BoundEstimates) -> float:
    """Residual disturbance level delta entering the ultimate bound."""
    h_lo, h_hi = h_spectrum
    _, j_hi = j_spectrum
    n = bounds.n_agents
    L = bounds.lipschitz_L
    delta_bar = 2.0 * n * bounds.m_bound * bounds.theta_bar ** 2 + bounds.eps_bar
    target = bounds.q0_bar + bounds.q0_dot_bar
    term1 = (delta_bar + n * bounds.omega_bar + 2.0 * L * n ** 2 * target) ** 2 \
        / (h_lo * gains.k2)
    term2 = (h_hi * bounds.d_bound + 2.0 * L * n ** 2 * h_hi * target
             + n * bounds.omega_bar * h_hi) ** 2 / (2.0 * gains.k4)
    term3 = gains.k6 * bounds.theta_bar ** 2 * j_hi
    return term1 + term2 + term3


def compute_lambdas(gamma, p: int | None = None) -> tuple:
    """Rayleigh sandwich constants of the Lyapunov weighting blkdiag(I, Gamma^-1).

    gamma may be a scalar (learning rate gamma * I_p) or a symmetric
    positive-definite matrix.
    """
    if np.isscalar(gamma):
        if gamma <= 0:
            raise ContractError(f"learning rate must be positive, got {gamma}")
        inv_ev = np.array([1.0 / gamma])
    else:
        g = np.asarray(gamma, dtype=float)
        if np.abs(g - g.T).max() > 1e-10 * max(1.0, np.abs(g).max()):
            raise ContractError("learning-rate matrix must be symmetric")
        ev = np.linalg.eigvalsh(0.5 * (g + g.T))
        if ev[0] <= 0:
            raise ContractError("learning-rate matrix must be positive definite")
        inv_ev = 1.0 / ev
    lam1 = 0.5 * min(1.0, float(inv_ev.min()))
    lam2 = 0.5 * max(1.0, float(inv_ev.max()))
    return lam1, lam2


def lambda3(alphas: np.ndarray) -> float:
    """Half the smallest damping margin."""
    return 0.5 * float(np.min(alphas))


@dataclass(frozen=True)
class FeasibilitySets:
    uub_radius: float | None
    stabilizing_radius: float | None
    chi_feasible: bool
    upsilon: float
    reason: str = ""


def sets_and_feasibility(lambdas: tuple, delta: float, chi: float,
                         gains: Gains, h_spectrum: tuple) -> FeasibilitySets:
    """Ultimate-bound and stabilizing radii plus the domain feasibility check.

    upsilon is the input-domain radius implied by the state domain:
    (h_max (k1 + 1) + k3 + 2) chi.
    """
    lam1, lam2, lam3 = lambdas
    upsilon = (h_spectrum[1] * (gains.k1 + 1.0) + gains.k3 + 2.0) * chi
    if lam3 <= 0:
        return FeasibilitySets(None, None, False, upsilon,
                               reason="lambda3 <= 0: gain margins violated")
    uub = math.sqrt((lam2 / lam1) * (delta / lam3))
    feasible = chi > uub * math.sqrt(lam2 / lam1 + 1.0)
    radicand = (lam1 / lam2) * chi ** 2 - delta / lam3
    stab = math.sqrt(radicand) if radicand >= 0 else None
    reason = "" if stab is not None else "stabilizing-set radicand negative"
    return FeasibilitySets(uub, stab, feasible, upsilon, reason=reason)


def envelope(t, z0_norm: float, lambdas: tuple, delta: float):
    """Theoretical decay envelope on ||z(t)||, elementwise over t.

    sqrt(lam2/lam1) * sqrt(z0^2 exp(-(lam3/lam2) t) + (delta/lam3)(1 - exp(..)))
    """
    lam1, lam2, lam3 = lambdas
    if lam3 <= 0:
        raise ContractError("envelope requires lambda3 > 0")
    decay = np.exp(-(lam3 / lam2) * np.asarray(t, dtype=float))
    inner = z0_norm ** 2 * decay + (delta / lam3) * (1.0 - decay)
    return np.sqrt(lam2 / lam1) * np.sqrt(inner)


# ---------------------------------------------------------------------------
# empirical bound estimation (sampling-based lower bounds)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    samples: int


def _ball(rng: np.random.Generator, n: int, dim: int, radius: float,
          center: np.ndarray | None) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= radius * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / dim)
    return x if center is None else x + center


def estimate_lipschitz(fn, radius: float, dim: int, n_pairs: int = 10000,
                       seed: int = 0, center: np.ndarray | None = None) -> LipschitzEstimate:
    """Max difference quotient of `fn` over random pairs in a ball.

    fn must accept an (n, dim) batch and return (n, m).  The result is a
    sampling-based lower bound on the true Lipschitz constant.
    """
    rng = np.random.default_rng(seed)
    a = _ball(rng, n_pairs, dim, radius, center)
    b = _ball(rng, n_pairs, dim, radius, center)
    gap = np.linalg.norm(a - b, axis=1)
    ok = gap > 1e-12
    fa = np.asarray(fn(a[ok]), dtype=float)
    fb = np.asarray(fn(b[ok]), dtype=float)
    ratios = np.linalg.norm(fa - fb, axis=1) / gap[ok]
    return LipschitzEstimate(value=float(ratios.max(initial=0.0)),
                             samples=int(np.count_nonzero(ok)))


def estimate_l_phi(arch, kappa_radius: float, theta_bar: float,
                   n_samples: int = 2000, seed: int = 0,
                   eps_proj: float = 0.1) -> LipschitzEstimate:
    """Max spectral norm of the weight Jacobian over sampled (kappa, theta).

    kappa ranges over the input ball, theta over the projection shell ball;
    again a sampling-based lower bound on the true sup.
    """
    from . import dnn

    rng = np.random.default_rng(seed)
    p = dnn.param_count(arch)
    shell = dnn.projection_shell_radius(theta_bar, eps_proj)
    kappas = _ball(rng, n_samples, arch.input_dim, kappa_radius, None)
    thetas = _ball(rng, n_samples, p, shell, None)
    worst = 0.0
    for kap, th in zip(kappas, thetas):
        jac = dnn.jacobian_weights(kap, th, arch)
        worst = max(worst, float(np.linalg.norm(jac, ord=2)))
    return LipschitzEstimate(value=worst, samples=n_samples)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GainReport:
    """Everything the feasibility analysis produces, JSON-stable."""

    alphas: tuple
    lambda1: float
    lambda2: float
    lambda3: float
    delta: float
    uub_radius: float | None
    stabilizing_radius: float | None
    chi_feasible: bool
    upsilon: float
    chi: float
    h_spectrum: tuple
    j_spectrum: tuple
    violated_alphas: tuple
    caveats: tuple = field(default_factory=tuple)

    def to_json_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "delta": self.delta,
            "uub_radius": self.uub_radius,
            "stabilizing_radius": self.stabilizing_radius,
            "chi_feasible": self.chi_feasible,
            "upsilon": self.upsilon,
            "chi": self.chi,
            "h_spectrum": list(self.h_spectrum),
            "j_spectrum": list(self.j_spectrum),
            "violated_alphas": list(self.violated_alphas),
            "caveats": list(self.caveats),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("alpha_%d" % (i + 1), v) for i, v in enumerate(self.alphas)]
        rows += [("lambda_1", self.lambda1), ("lambda_2", self.lambda2),
                 ("lambda_3", self.lambda3), ("delta", self.delta),
                 ("uub_radius", self.uub_radius),
                 ("stabilizing_radius", self.stabilizing_radius),
                 ("upsilon", self.upsilon), ("chi", self.chi)]
        width = max(len(name) for name, _ in rows)
        lines = ["%-*s  %s" % (width, name,
                               "n/a" if value is None else "%.6g" % value)
                 for name, value in rows]
        lines.append("%-*s  %s" % (width, "chi_feasible", self.chi_feasible))
        if self.violated_alphas:
            lines.append("violated margins: " +
                         ", ".join("alpha_%d" % (i + 1) for i in self.violated_alphas))
        for c in self.caveats:
            lines.append("caveat: " + c)
        return "\n".join(lines)


def build_gain_report(gains: Gains, h_spectrum: tuple, j_spectrum: tuple,
                      bounds: BoundEstimates, caveats: tuple = ()) -> GainReport:
    """Evaluate every closed form and package the verdict.

    Pure function of its inputs: identical inputs give byte-identical JSON.
    """
    alphas = compute_alphas(gains, h_spectrum, j_spectrum, bounds)
    lam1, lam2 = compute_lambdas(gains.gamma)
    lam3 = lambda3(alphas)
    delta = compute_delta(gains, h_spectrum, j_spectrum, bounds)
    sets = sets_and_feasibility((lam1, lam2, lam3), delta, bounds.chi, gains, h_spectrum)
    violated = tuple(int(i) for i in np.nonzero(alphas <= 0)[0])
    notes = tuple(caveats)
    if sets.reason:
        notes = notes + (sets.reason,)
    return GainReport(
        alphas=tuple(float(a) for a in alphas),
        lambda1=lam1, lambda2=lam2, lambda3=lam3, delta=float(delta),
        uub_radius=sets.uub_radius, stabilizing_radius=sets.stabilizing_radius,
        chi_feasible=sets.chi_feasible, upsilon=sets.upsilon, chi=bounds.chi,
        h_spectrum=(float(h_spectrum[0]), float(h_spectrum[1])),
        j_spectrum=(float(j_spectrum[0]), float(j_spectrum[1])),
        violated_alphas=violated, caveats=notes,
    )
