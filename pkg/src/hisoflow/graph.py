"""
Undirected connected graphs and the matrices derived from them.

Nodes are 1-based in every public interface (edge lists, config files), to
match the usual way small example networks are written down; internally
arrays are 0-based.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GraphError(ValueError):
    """Malformed edge list (self-loop, duplicate, out-of-range node)."""


class DisconnectedGraphError(GraphError):
    """The edge list is well formed but the graph is not connected."""


# 5-node example network used by the logistic regression experiment
FIVE_NODE_EDGES = ((1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (3, 5), (4, 5))

NAMED_GRAPHS = {
    "fig1": (5, FIVE_NODE_EDGES),
    "k2": (2, ((1, 2),)),
    "cycle3": (3, ((1, 2), (2, 3), (1, 3))),
}


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: tuple  # sorted (i, j) pairs, 1-based, i < j
    adjacency: np.ndarray = field(repr=False)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def max_degree(self):
        return int(self.degrees.max())

    def neighbors(self, i):
        """0-based neighbour indices of 0-based node `i`."""
        return np.flatnonzero(self.adjacency[i])

    @cached_property
    def edge_index(self):
        """(M, 2) array of 0-based endpoints, lower index first."""
        return np.array(self.edges, dtype=int).reshape(-1, 2) - 1

    @cached_property
    def incidence(self):
        return incidence_matrix(self)


@dataclass(frozen=True)
class GraphMatrices:
    laplacian: np.ndarray
    incidence: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    lambda2: float
    lambdaN: float
    lambda_bar: float


def build_graph(n_nodes, edges):
    """
    Build a simple undirected graph and check that it is connected.

    Parameters
    ----------
    n_nodes : int
        Number of nodes N; nodes are labelled 1..N.
    edges : iterable of pairs
        Unordered node pairs ``(i, j)``.

    Raises
    ------
    GraphError
        On self-loops, duplicate edges or out-of-range labels.
    DisconnectedGraphError
        If the graph has more than one connected component.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 1:
        raise GraphError(f"n_nodes must be positive, got {n_nodes}")

    seen = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
            raise GraphError(f"edge ({i}, {j}) has a node outside 1..{n_nodes}")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)

    pairs = tuple(sorted(seen))
    adjacency = np.zeros((n_nodes, n_nodes))
    for i, j in pairs:
        adjacency[i - 1, j - 1] = adjacency[j - 1, i - 1] = 1.0

    if not _is_connected(adjacency):
        raise DisconnectedGraphError(
            f"graph with {n_nodes} nodes and edges {list(pairs)} is not connected")

    adjacency.setflags(write=False)
    return Graph(n_nodes, pairs, adjacency)


def named_graph(name):
    try:
        n, edges = NAMED_GRAPHS[name]
    except KeyError:
        raise GraphError(
            f"unknown graph name {name!r}; known: {sorted(NAMED_GRAPHS)}") from None
    return build_graph(n, edges)


def _is_connected(adjacency):
    n = adjacency.shape[0]
    visited = np.zeros(n, dtype=bool)
    stack = [0]
    visited[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adjacency[i]):
            if not visited[j]:
                visited[j] = True
                stack.append(j)
    return bool(visited.all())


def incidence_matrix(g):
    """Signed N x M incidence matrix: +1 at the lower node, -1 at the higher."""
    B = np.zeros((g.n_nodes, g.n_edges))
    for k, (i, j) in enumerate(g.edge_index):
        B[i, k] = 1.0
        B[j, k] = -1.0
    return B


def psd_pinv(S, rel_cutoff=1e-10):
    """Pseudo-inverse of a symmetric PSD matrix by eigendecomposition."""
    w, Q = np.linalg.eigh(S)
    cutoff = rel_cutoff * max(w.max(), 0.0)
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / w[keep]
    return (Q * inv) @ Q.T


def matrices(g):
    """Laplacian, incidence, consensus projection and spectral constants."""
    L = np.diag(g.adjacency.sum(axis=1)) - g.adjacency
    B = incidence_matrix(g)
    Pi = L @ psd_pinv(L)
    # symmetrize away roundoff from the product
    Pi = 0.5 * (Pi + Pi.T)
    eigenvalues = np.linalg.eigvalsh(L)
    if g.n_nodes == 1:
        lambda2 = lambdaN = np.inf
        lambda_bar = 0.0
    else:
        lambda2 = float(eigenvalues[1])
        lambdaN = float(eigenvalues[-1])
        lambda_bar = 1.0 / (2.0 * lambda2)
    return GraphMatrices(
        laplacian=L,
        incidence=B,
        projection=Pi,
        eigenvalues=eigenvalues,
        lambda2=lambda2,
        lambdaN=lambdaN,
        lambda_bar=lambda_bar,
    )


def stack(mat, d):
    """Lift an N x N graph matrix to act on stacked d-dimensional states."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return np.kron(np.asarray(mat, dtype=float), np.eye(d))


def random_connected_graph(rng, n_nodes, p_edge=0.4):
    """
    Random connected graph: a random spanning tree plus Bernoulli extra edges.
    """
    order = rng.permutation(n_nodes) + 1
    edges = set()
    for k in range(1, n_nodes):
        parent = order[rng.integers(0, k)]
        child = order[k]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(1, n_nodes + 1):
        for j in range(i + 1, n_nodes + 1):
            if (i, j) not in edges and rng.random() < p_edge:
                edges.add((i, j))
    return build_graph(n_nodes, sorted(edges))
