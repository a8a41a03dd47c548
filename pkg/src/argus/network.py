"""Time-varying communication graphs and gossip mixing matrices.

Graphs are Erdős-Rényi samples with forced self-loops, resampled until
connected.  Mixing weights follow the Metropolis-Hastings rule, which yields
a symmetric doubly-stochastic matrix whose spectrum lies in (-1, 1] on any
connected graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GenerationError, InvalidArgumentError

_MAX_RESAMPLES = 10_000


@dataclass
class Topology:
    """Symmetric boolean adjacency with true diagonal, for one iteration."""

    N: int
    adjacency: np.ndarray
    t: int = 0

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=bool)
        if a.shape != (self.N, self.N):
            raise InvalidArgumentError(f"adjacency must be {self.N}x{self.N}")
        if not np.array_equal(a, a.T):
            raise InvalidArgumentError("adjacency must be symmetric")
        if not np.all(np.diag(a)):
            raise InvalidArgumentError("adjacency diagonal must be all true (self-loops)")
        self.adjacency = a

    def neighbors(self, i: int) -> np.ndarray:
        """Neighbor ids of agent i, including i itself."""
        return np.flatnonzero(self.adjacency[i])

    def edges(self) -> list[tuple[int, int]]:
        """Undirected off-diagonal edges (i < j)."""
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass
class MixingMatrix:
    W: np.ndarray
    rho: float


def is_connected(adjacency: np.ndarray) -> bool:
    n_comp, _ = connected_components(csr_matrix(adjacency), directed=False)
    return n_comp == 1


def sample_er_topology(N: int, p_c: float, rng: np.random.Generator, t: int = 0) -> Topology:
    """Erdős-Rényi graph with connectivity probability p_c, forced self-loops,
    resampled until connected."""
    if N < 2:
        raise InvalidArgumentError(f"need at least 2 agents, got N={N}")
    if not (0.0 < p_c <= 1.0):
        raise InvalidArgumentError(f"connectivity probability must be in (0, 1], got {p_c}")

    iu = np.triu_indices(N, k=1)
    for _ in range(_MAX_RESAMPLES):
        adj = np.eye(N, dtype=bool)
        mask = rng.random(len(iu[0])) < p_c
        adj[iu[0][mask], iu[1][mask]] = True
        adj[iu[1][mask], iu[0][mask]] = True
        if is_connected(adj):
            return Topology(N=N, adjacency=adj, t=t)
    raise GenerationError(
        f"failed to sample a connected graph after {_MAX_RESAMPLES} tries (N={N}, p_c={p_c})")


def metropolis_weights(topo: Topology) -> MixingMatrix:
    """Metropolis-Hastings mixing weights for a connected topology.

    W_ij = 1 / (1 + max(deg_i, deg_j)) for adjacent i != j, with degrees
    excluding the self-loop; diagonal absorbs the remainder of each row.
    """
    adj = topo.adjacency
    N = topo.N
    if N > 1 and not is_connected(adj):
        raise InvalidArgumentError("topology must be connected")

    deg = adj.sum(axis=1) - 1  # exclude self-loop
    W = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            if adj[i, j]:
                W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(W=W, rho=spectral_gap(W))


def spectral_gap(W: np.ndarray) -> float:
    """||W - (1/N) e e^T||_2 via a symmetric eigensolve."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InvalidArgumentError("mixing matrix must be square")
    if not np.allclose(W, W.T, atol=1e-12):
        raise InvalidArgumentError("mixing matrix must be symmetric")
    N = W.shape[0]
    deflated = W - np.ones((N, N)) / N
    eigvals = np.linalg.eigvalsh(deflated)
    return float(np.max(np.abs(eigvals)))


def check_mixing_invariants(W: np.ndarray, adjacency: np.ndarray, atol: float = 1e-10) -> list[str]:
    """Return a list of violated mixing-matrix properties (empty = all hold)."""
    problems = []
    N = W.shape[0]
    pos = W > 0
    if not np.array_equal(pos, np.asarray(adjacency, dtype=bool)):
        problems.append("support of W does not match the edge set")
    if not np.allclose(W, W.T, atol=atol):
        problems.append("W is not symmetric")
    if not np.allclose(W.sum(axis=1), np.ones(N), atol=atol):
        problems.append("rows of W do not sum to 1")
    eigvals = np.linalg.eigvalsh(W)
    if eigvals.min() <= -1.0 + 1e-12 or eigvals.max() > 1.0 + 1e-10:
        problems.append(f"eigenvalues outside (-1, 1]: [{eigvals.min():.6f}, {eigvals.max():.6f}]")
    if spectral_gap(W) >= 1.0 - 1e-12:
        problems.append("spectral parameter rho is not < 1")
    return problems
