"""Weighted undirected graphs, Laplacian spectra, and the disagreement basis.

The disagreement basis S is an orthonormal basis of the subspace
orthogonal to consensus; it simultaneously diagonalizes the Laplacian,
which is what every rate bound in :mod:`scalareq.theory` consumes.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DisconnectedGraphError
from .linalg import sym_eig

ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True)
class WeightedGraph:
    """Simple undirected weighted graph on nodes 0..n-1.

    Edges are stored as (i, j, weight) with i < j and weight > 0.
    Connectivity is verified at construction. n = 1 (a single node, no
    edges) is allowed as the trivial case used by scalar instances.
    """

    n: int
    edges: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one node, got n={self.n}")
        seen = set()
        norm = []
        for (i, j, w) in self.edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) outside node range 0..{self.n - 1}")
            if w <= 0:
                raise ValueError(f"edge ({i},{j}) has non-positive weight {w}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            norm.append((i, j, w))
        object.__setattr__(self, "edges", tuple(norm))
        comp = self.component_of(0)
        if len(comp) != self.n:
            raise DisconnectedGraphError(
                f"graph is disconnected; component of node 0 is {sorted(comp)}",
                component=sorted(comp),
            )

    def component_of(self, start):
        """Set of nodes reachable from ``start`` (iterative traversal)."""
        adj = {i: [] for i in range(self.n)}
        for (i, j, _) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    @cached_property
    def neighbor_lists(self):
        """Tuple indexed by node: sorted tuple of (neighbor, weight)."""
        adj = {i: [] for i in range(self.n)}
        for (i, j, w) in self.edges:
            adj[i].append((j, w))
            adj[j].append((i, w))
        return tuple(tuple(sorted(adj[i])) for i in range(self.n))

    def neighbors(self, i):
        return self.neighbor_lists[i]

    def laplacian(self):
        """Dense Laplacian: off-diagonals -a_ij, diagonals sum of weights."""
        L = np.zeros((self.n, self.n))
        for (i, j, w) in self.edges:
            L[i, i] += w
            L[j, j] += w
            L[i, j] -= w
            L[j, i] -= w
        return L


def build_graph(kind, n, weight=1.0, edges=None):
    """Construct a standard topology or wrap a custom edge list.

    Args:
        kind: 'cycle' (n >= 3), 'path', 'complete', or 'custom'.
        n: node count (>= 2; use WeightedGraph directly for n = 1).
        weight: uniform edge weight for the standard kinds.
        edges: iterable of (i, j, weight) for kind='custom'.
    """
    if n < 2:
        raise ValueError(f"standard topologies need n >= 2, got n={n}")
    if weight <= 0:
        raise ValueError(f"need weight > 0, got {weight}")
    if kind == "cycle":
        if n < 3:
            raise ValueError("a cycle needs n >= 3 (n = 2 would duplicate the edge)")
        e = [(i, i + 1, weight) for i in range(n - 1)] + [(0, n - 1, weight)]
    elif kind == "path":
        e = [(i, i + 1, weight) for i in range(n - 1)]
    elif kind == "complete":
        e = [(i, j, weight) for i in range(n) for j in range(i + 1, n)]
    elif kind == "custom":
        if edges is None:
            raise ValueError("kind='custom' requires an edge list")
        e = list(edges)
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    return WeightedGraph(n=n, edges=tuple(e))


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Laplacian with its full eigensystem.

    eigenvalues ascend; lambda2 / lambda_n are the algebraic
    connectivity and the largest eigenvalue. eigenvectors holds the
    orthonormal eigenvector columns in the same order.
    """

    L: np.ndarray
    eigenvalues: np.ndarray
    lambda2: float
    lambda_n: float
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.L.shape[0]


def laplacian_spectrum(G):
    """Laplacian of G with ascending eigenvalues and eigenvectors.

    Raises:
        DisconnectedGraphError: lambda_2 at numerical zero.
    """
    if G.n < 2:
        raise ValueError("spectral analysis needs n >= 2")
    L = G.laplacian()
    lam, Q = sym_eig(L)
    scale = max(1.0, float(lam[-1]))
    if abs(lam[0]) > ZERO_EIG_TOL * scale:
        raise RuntimeError(f"smallest Laplacian eigenvalue {lam[0]:.3e} not at zero")
    if lam[1] <= ZERO_EIG_TOL * scale:
        raise DisconnectedGraphError(
            f"lambda_2 = {lam[1]:.3e} at numerical zero (graph effectively disconnected)"
        )
    return LaplacianSpectrum(
        L=L,
        eigenvalues=lam,
        lambda2=float(lam[1]),
        lambda_n=float(lam[-1]),
        eigenvectors=Q,
    )


def disagreement_basis(spec, tol=1e-9):
    """Orthonormal basis S (n x (n-1)) of the disagreement subspace.

    Columns are the Laplacian eigenvectors for the nonzero eigenvalues,
    re-orthonormalized within repeated eigenspaces by modified
    Gram-Schmidt. Satisfies, each to 1e-9:

        S^T 1 = 0,  S^T S = I,  S S^T = I - 11^T/n,  S^T L S = diag(lambda_2..lambda_n)
    """
    n = spec.n
    lam = spec.eigenvalues
    S = spec.eigenvectors[:, 1:].copy()
    # group repeated eigenvalues, then MGS inside each group
    group_tol = 1e-8 * max(1.0, float(lam[-1]))
    start = 0
    for stop in range(1, n):
        boundary = stop == n - 1 or lam[stop + 1] - lam[stop] > group_tol
        if boundary:
            block = S[:, start:stop + 1]
            for c in range(block.shape[1]):
                v = block[:, c]
                for p in range(c):
                    v = v - np.dot(block[:, p], v) * block[:, p]
                nv = np.linalg.norm(v)
                if nv < 1e-8:
                    raise RuntimeError("failed to orthonormalize a repeated eigenspace")
                block[:, c] = v / nv
            start = stop + 1

    ones = np.ones(n)
    checks = (
        float(np.abs(S.T @ ones).max()),
        float(np.abs(S.T @ S - np.eye(n - 1)).max()),
        float(np.abs(S @ S.T - (np.eye(n) - np.outer(ones, ones) / n)).max()),
        float(np.abs(S.T @ spec.L @ S - np.diag(lam[1:])).max()),
    )
    if max(checks) > tol * max(1.0, float(lam[-1])):
        raise RuntimeError(f"disagreement basis identities violated: residuals {checks}")
    return S
