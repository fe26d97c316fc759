"""Communication graph, sensing model, and interaction-matrix analysis.

The swarm's ability to regulate to the target is gated by two structural
objects: the graph Laplacian L of the (undirected, static) communication
topology, and the interaction matrix

    H = (L kron I_3) + blkdiag(b_1 C_1^T C_1, ..., b_N C_N^T C_N),

whose positive definiteness (for a connected graph) is equivalent to the
trackability rank condition rank(sum_i b_i C_i^T C_i) = 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

__all__ = [
    "Graph",
    "SensingModel",
    "InteractionMatrices",
    "TrackabilityResult",
    "ring_graph",
    "path_graph",
    "build_laplacian",
    "build_interaction_matrix",
    "check_trackability",
    "spectral_bounds",
    "analyze_topology",
]


@dataclass(frozen=True)
class Graph:
    """Undirected communication graph over agents 0..n_agents-1, no self-loops."""

    n_agents: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be positive, got {self.n_agents}")
        norm = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise ConfigError(f"self-loop ({i},{i}) is not allowed")
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise ConfigError(f"edge {e} out of range for {self.n_agents} agents")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def neighbors(self, i: int) -> tuple:
        return tuple(sorted(b if a == i else a for a, b in self.edges if i in (a, b)))

    def is_connected(self) -> bool:
        if self.n_agents == 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_agents


def ring_graph(n: int) -> Graph:
    """Cycle over n agents: 0-1-...-(n-1)-0."""
    return Graph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def path_graph(n: int) -> Graph:
    """Chain over n agents: 0-1-...-(n-1)."""
    return Graph(n, frozenset((i, i + 1) for i in range(n - 1)))


@dataclass(frozen=True)
class SensingModel:
    """Per-agent output matrices C_i (m_i x 3) and target-sensing flags b_i in {0,1}."""

    outputs: tuple
    flags: tuple

    def __post_init__(self):
        outputs = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.outputs)
        flags = tuple(int(b) for b in self.flags)
        if len(outputs) != len(flags):
            raise ConfigError(
                f"{len(outputs)} output matrices but {len(flags)} sensing flags"
            )
        for i, c in enumerate(outputs):
            if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] < 1:
                raise ConfigError(f"C_{i} must be m x 3 with m >= 1, got shape {c.shape}")
            if not np.all(np.isfinite(c)):
                raise ConfigError(f"C_{i} has non-finite entries")
        if any(b not in (0, 1) for b in flags):
            raise ConfigError(f"sensing flags must be 0/1, got {self.flags}")
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "flags", flags)

    @property
    def n_agents(self) -> int:
        return len(self.outputs)

    def gram_blocks(self) -> np.ndarray:
        """(N, 3, 3) stack of b_i * C_i^T C_i."""
        return np.stack([b * (c.T @ c) for c, b in zip(self.outputs, self.flags)])


@dataclass(frozen=True)
class TrackabilityResult:
    trackable: bool
    rank: int


@dataclass(frozen=True)
class InteractionMatrices:
    """Assembled L and H plus the spectra the gain formulas consume."""

    laplacian: np.ndarray
    h_matrix: np.ndarray
    h_spectrum: tuple        # (lambda_min(H), lambda_max(H))
    j_spectrum: tuple        # (lambda_min(L+I), lambda_max(L+I)); J = (L+I) kron I_p


def build_laplacian(graph: Graph) -> np.ndarray:
    """L = D - A for an undirected graph; symmetric PSD with zero row sums."""
    n = graph.n_agents
    adj = np.zeros((n, n))
    for i, j in graph.edges:
        adj[i, j] = adj[j, i] = 1.0
    return np.diag(adj.sum(axis=1)) - adj


def build_interaction_matrix(laplacian: np.ndarray, sensing: SensingModel) -> np.ndarray:
    """H = (L kron I_3) + blkdiag(b_i C_i^T C_i)."""
    laplacian = np.asarray(laplacian, dtype=float)
    n = laplacian.shape[0]
    if laplacian.shape != (n, n):
        raise ConfigError(f"laplacian must be square, got shape {laplacian.shape}")
    if sensing.n_agents != n:
        raise ConfigError(
            f"sensing model covers {sensing.n_agents} agents but graph has {n}"
        )
    h = np.kron(laplacian, np.eye(3))
    for i, blk in enumerate(sensing.gram_blocks()):
        h[3 * i:3 * i + 3, 3 * i:3 * i + 3] += blk
    return h


def check_trackability(sensing: SensingModel, rank_tol: float | None = None) -> TrackabilityResult:
    """Numerical rank of sum_i b_i C_i^T C_i; trackable iff rank == 3.

    The rank threshold is sigma_max * 3 * eps * max_dim unless overridden.
    """
    gram = sensing.gram_blocks().sum(axis=0)
    svals = np.linalg.svd(gram, compute_uv=False)
    if rank_tol is None:
        rank_tol = svals.max(initial=0.0) * 3.0 * np.finfo(float).eps * max(gram.shape)
    rank = int(np.sum(svals > rank_tol))
    return TrackabilityResult(trackable=(rank == 3), rank=rank)


def spectral_bounds(matrix: np.ndarray, sym_tol: float = 1e-10) -> tuple:
    """(lambda_min, lambda_max) of a symmetric matrix.

    Input must be symmetric within sym_tol (relative to its magnitude); the
    eigensolver runs on (M + M^T)/2 to absorb round-off.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, np.abs(m).max())
    if np.abs(m - m.T).max() > sym_tol * scale:
        raise ContractError("matrix is not symmetric within tolerance")
    ev = np.linalg.eigvalsh(0.5 * (m + m.T))
    return float(ev[0]), float(ev[-1])


def analyze_topology(graph: Graph, sensing: SensingModel) -> InteractionMatrices:
    """Assemble L, H and their extreme eigenvalues for gain analysis."""
    lap = build_laplacian(graph)
    h = build_interaction_matrix(lap, sensing)
    return InteractionMatrices(
        laplacian=lap,
        h_matrix=h,
        h_spectrum=spectral_bounds(h),
        j_spectrum=spectral_bounds(lap + np.eye(graph.n_agents)),
    )
