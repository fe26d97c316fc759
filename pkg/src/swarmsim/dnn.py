"""Feedforward network with analytic weight Jacobian and smooth projection.

The network follows the recursion

    x_0 = V_1^T [kappa; 1],      x_j = V_{j+1}^T [act(x_{j-1}); 1],   j = 1..k,

so every layer output is affine in its own weight matrix and the final map
is affine in V_{k+1}.  Weights live in a single flat vector: the matrices
V_1..V_{k+1} are column-stacked (Fortran order) and concatenated in layer
order, which fixes the Jacobian block layout and makes checkpoints portable.

Hidden layers 1..k-1 use the configured hidden activation; the activation
vector feeding the output matrix (layer k) may differ, so a bounded squashing
there keeps the output affine in the last weights while saturating the
feature vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError

__all__ = [
    "Architecture",
    "EvalTrace",
    "activation",
    "param_count",
    "layer_shapes",
    "unvec_layers",
    "vec_layers",
    "forward",
    "jacobian_weights",
    "vjp_weights",
    "kaiming_init",
    "smooth_projection",
    "projection_shell_radius",
    "BatchedNet",
    "save_weights",
    "load_weights",
]

_ACTIVATIONS = ("swish", "tanh")


@dataclass(frozen=True)
class Architecture:
    """Layer widths [L_0, ..., L_{k+1}] and activation choices."""

    widths: tuple
    hidden_activation: str = "swish"
    last_hidden_activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 3:
            raise ContractError(
                f"need at least one hidden layer (>= 3 widths), got {widths}"
            )
        if any(w < 1 for w in widths):
            raise ContractError(f"all layer widths must be >= 1, got {widths}")
        for kind in (self.hidden_activation, self.last_hidden_activation):
            if kind not in _ACTIVATIONS:
                raise ContractError(f"unknown activation {kind!r}")
        object.__setattr__(self, "widths", widths)

    @property
    def k(self) -> int:
        """Number of hidden layers."""
        return len(self.widths) - 2

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def activation_kind(self, j: int) -> str:
        """Activation applied to the pre-activation of hidden layer j (1-based)."""
        return self.last_hidden_activation if j == self.k else self.hidden_activation


def layer_shapes(arch: Architecture) -> list:
    """[(L_j + 1, L_{j+1})] shapes of V_1..V_{k+1} (input row count includes bias)."""
    w = arch.widths
    return [(w[j] + 1, w[j + 1]) for j in range(len(w) - 1)]


def param_count(arch: Architecture) -> int:
    """Total weight count p = sum_j (L_j + 1) L_{j+1}."""
    return sum(rows * cols for rows, cols in layer_shapes(arch))


def _block_offsets(arch: Architecture) -> np.ndarray:
    sizes = [rows * cols for rows, cols in layer_shapes(arch)]
    return np.concatenate([[0], np.cumsum(sizes)])


def activation(x, kind: str):
    """Value and exact first derivative of the named activation."""
    x = np.asarray(x, dtype=float)
    if kind == "swish":
        # x * sigmoid(x); sigmoid written via tanh for overflow safety
        s = 0.5 * (1.0 + np.tanh(0.5 * x))
        return x * s, s * (1.0 + x * (1.0 - s))
    if kind == "tanh":
        t = np.tanh(x)
        return t, 1.0 - t * t
    raise ContractError(f"unknown activation {kind!r}")


def unvec_layers(theta: np.ndarray, arch: Architecture) -> list:
    """Flat weight vector -> list of V_j matrices (bias row last)."""
    theta = np.asarray(theta, dtype=float)
    p = param_count(arch)
    if theta.shape != (p,):
        raise ContractError(f"theta has shape {theta.shape}, expected ({p},)")
    offs = _block_offsets(arch)
    out = []
    for j, (rows, cols) in enumerate(layer_shapes(arch)):
        seg = theta[offs[j]:offs[j + 1]]
        out.append(seg.reshape(cols, rows).T)  # inverse of column-stacking
    return out


def vec_layers(mats: list) -> np.ndarray:
    """List of V_j matrices -> flat weight vector (column-stacked per layer)."""
    return np.concatenate([np.asarray(m, dtype=float).T.reshape(-1) for m in mats])


@dataclass(frozen=True)
class EvalTrace:
    """Cached forward-pass intermediates for Jacobian reuse.

    acts[j] is the (bias-augmented) input vector of layer j+1; ders[j-1] is the
    activation derivative at hidden layer j.  kappa/theta are retained so a
    stale trace can be rejected.
    """

    kappa: np.ndarray
    theta: np.ndarray
    acts: list = field(repr=False)
    ders: list = field(repr=False)

    def matches(self, kappa, theta) -> bool:
        return np.array_equal(self.kappa, kappa) and np.array_equal(self.theta, theta)


def forward(kappa: np.ndarray, theta: np.ndarray, arch: Architecture):
    """Evaluate the network; returns (output, EvalTrace)."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (arch.input_dim,):
        raise ContractError(f"kappa has shape {kappa.shape}, expected ({arch.input_dim},)")
    mats = unvec_layers(theta, arch)
    a = np.append(kappa, 1.0)
    acts, ders = [a], []
    x = mats[0].T @ a
    for j in range(1, arch.k + 1):
        val, der = activation(x, arch.activation_kind(j))
        a = np.append(val, 1.0)
        acts.append(a)
        ders.append(der)
        x = mats[j].T @ a
    trace = EvalTrace(kappa=kappa.copy(), theta=np.asarray(theta, dtype=float).copy(),
                      acts=acts, ders=ders)
    return x, trace


def jacobian_weights(kappa, theta, arch: Architecture, trace: EvalTrace | None = None) -> np.ndarray:
    """d(output)/d(theta) as an (output_dim x p) matrix in flat-layout order.

    The block for layer j is  M_j (I kron a_j^T)  with M_j the product of the
    downstream weight/activation Jacobians and a_j the cached layer input.
    """
    if trace is None:
        _, trace = forward(kappa, theta, arch)
    elif not trace.matches(np.asarray(kappa, dtype=float), np.asarray(theta, dtype=float)):
        raise ContractError("trace does not match (kappa, theta); recompute the forward pass")
    mats = unvec_layers(theta, arch)
    out_dim = arch.output_dim
    offs = _block_offsets(arch)
    jac = np.empty((out_dim, offs[-1]))
    # back-to-front: M starts as identity at the output and absorbs V^T * diag(der)
    m = np.eye(out_dim)
    for j in range(arch.k, -1, -1):
        a_j = trace.acts[j]
        block = (m[:, :, None] * a_j[None, None, :]).reshape(out_dim, -1)
        jac[:, offs[j]:offs[j + 1]] = block
        if j > 0:
            # strip the bias column of V_{j+1}, then apply activation derivative
            m = (m @ mats[j].T[:, :-1]) * trace.ders[j - 1][None, :]
    return jac


def vjp_weights(v: np.ndarray, trace: EvalTrace, arch: Architecture) -> np.ndarray:
    """jacobian_weights(...)^T @ v without forming the Jacobian (backprop)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (arch.output_dim,):
        raise ContractError(f"v has shape {v.shape}, expected ({arch.output_dim},)")
    mats = unvec_layers(trace.theta, arch)
    offs = _block_offsets(arch)
    g = np.empty(offs[-1])
    delta = v
    for j in range(arch.k, -1, -1):
        g[offs[j]:offs[j + 1]] = np.outer(delta, trace.acts[j]).reshape(-1)
        if j > 0:
            delta = (mats[j][:-1, :] @ delta) * trace.ders[j - 1]
    return g


def kaiming_init(arch: Architecture, seed) -> np.ndarray:
    """Weight rows ~ N(0, 2/fan_in) with fan_in = L_j + 1; bias rows zero.

    Deterministic per seed.  Accepts anything numpy's SeedSequence accepts
    (an int or a sequence of ints).
    """
    rng = np.random.default_rng(seed)
    mats = []
    for rows, cols in layer_shapes(arch):
        v = np.zeros((rows, cols))
        v[:rows - 1, :] = rng.normal(0.0, np.sqrt(2.0 / rows), size=(rows - 1, cols))
        mats.append(v)
    return vec_layers(mats)


def projection_shell_radius(theta_bar: float, eps_proj: float = 0.1) -> float:
    """Outer radius theta_bar * sqrt(1 + eps) the projection never exceeds."""
    return float(theta_bar) * float(np.sqrt(1.0 + eps_proj))


def smooth_projection(raw: np.ndarray, theta_hat: np.ndarray, theta_bar: float,
                      eps_proj: float = 0.1) -> np.ndarray:
    """Smoothly remove the outward radial component of `raw` near the weight bound.

    Returns `raw` unchanged while ||theta_hat|| <= theta_bar or the update points
    inward; otherwise blends out the radial part with
    c = clip((||theta_hat||^2 - theta_bar^2) / (eps * theta_bar^2), 0, 1),
    which zeroes radial growth at the outer shell theta_bar*sqrt(1+eps).
    """
    if theta_bar <= 0:
        raise ContractError(f"theta_bar must be positive, got {theta_bar}")
    raw = np.asarray(raw, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    nrm2 = float(theta_hat @ theta_hat)
    inner = float(theta_hat @ raw)
    if nrm2 <= theta_bar ** 2 or inner <= 0.0:
        return raw.copy()
    c = min(1.0, (nrm2 - theta_bar ** 2) / (eps_proj * theta_bar ** 2))
    return raw - (c * inner / nrm2) * theta_hat


class BatchedNet:
    """Vectorized forward/VJP/projection over a batch of independent weight vectors.

    The batch axis indexes agents: all share one architecture but own private
    weights, so layer matmuls run as (B, out, in) einsums.  Results agree with
    the single-sample routines to round-off.
    """

    def __init__(self, arch: Architecture):
        self.arch = arch
        self.p = param_count(arch)
        self._shapes = layer_shapes(arch)
        self._offs = _block_offsets(arch)

    def split(self, theta: np.ndarray) -> list:
        """(B, p) -> per-layer (B, out, in) views of V^T."""
        theta = np.asarray(theta, dtype=float)
        b = theta.shape[0]
        return [
            theta[:, self._offs[j]:self._offs[j + 1]].reshape(b, cols, rows)
            for j, (rows, cols) in enumerate(self._shapes)
        ]

    def forward(self, theta: np.ndarray, kappa: np.ndarray):
        """theta (B, p), kappa (B, L_0) -> output (B, L_{k+1}) and batch trace."""
        b = kappa.shape[0]
        vts = self.split(theta)
        a = np.concatenate([kappa, np.ones((b, 1))], axis=1)
        acts, ders = [a], []
        x = np.einsum("boi,bi->bo", vts[0], a)
        for j in range(1, self.arch.k + 1):
            val, der = activation(x, self.arch.activation_kind(j))
            a = np.concatenate([val, np.ones((b, 1))], axis=1)
            acts.append(a)
            ders.append(der)
            x = np.einsum("boi,bi->bo", vts[j], a)
        return x, (vts, acts, ders)

    def vjp(self, batch_trace, v: np.ndarray) -> np.ndarray:
        """Batched jacobian^T @ v: (B, L_{k+1}) -> (B, p)."""
        vts, acts, ders = batch_trace
        b = v.shape[0]
        g = np.empty((b, self.p))
        delta = v
        for j in range(self.arch.k, -1, -1):
            g[:, self._offs[j]:self._offs[j + 1]] = (
                delta[:, :, None] * acts[j][:, None, :]
            ).reshape(b, -1)
            if j > 0:
                delta = np.einsum("boi,bo->bi", vts[j], delta)[:, :-1] * ders[j - 1]
        return g

    def project(self, raw: np.ndarray, theta: np.ndarray, theta_bar: float,
                eps_proj: float = 0.1) -> np.ndarray:
        """Batched smooth_projection."""
        nrm2 = np.einsum("bp,bp->b", theta, theta)
        inner = np.einsum("bp,bp->b", theta, raw)
        c = np.clip((nrm2 - theta_bar ** 2) / (eps_proj * theta_bar ** 2), 0.0, 1.0)
        active = (nrm2 > theta_bar ** 2) & (inner > 0.0)
        scale = np.where(active, c * inner / np.maximum(nrm2, 1e-300), 0.0)
        return raw - scale[:, None] * theta


def save_weights(path, theta: np.ndarray, arch: Architecture) -> None:
    """Persist a flat weight vector with its architecture header (JSON)."""
    payload = {
        "widths": list(arch.widths),
        "hidden_activation": arch.hidden_activation,
        "last_hidden_activation": arch.last_hidden_activation,
        "theta": [float(x) for x in np.asarray(theta, dtype=float)],
    }
    Path(path).write_text(json.dumps(payload))


def load_weights(path):
    """Inverse of save_weights; returns (theta, Architecture)."""
    payload = json.loads(Path(path).read_text())
    arch = Architecture(
        widths=tuple(payload["widths"]),
        hidden_activation=payload["hidden_activation"],
        last_hidden_activation=payload["last_hidden_activation"],
    )
    theta = np.asarray(payload["theta"], dtype=float)
    if theta.shape != (param_count(arch),):
        raise ContractError("checkpoint length does not match its architecture header")
    return theta, arch
