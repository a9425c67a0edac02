"""Step-function graphons and signals.

A step graphon over ``N`` equitable partitions of [0, 1] is stored as a
symmetric ``N x N`` matrix of edge probabilities; its companion signal is an
``N x M`` matrix whose row ``n`` is the value on partition ``n``.  Large
induced graphons may be backed by a ``scipy.sparse`` matrix so that products
with them cost ``O(E)`` rather than ``O(N^2)``.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ._random import check_random_state
from .exceptions import InvalidInputError, ParseError

__all__ = [
    "StepGraphon",
    "StepSignal",
    "AttributedGraph",
    "induce_graphon",
    "evaluate",
    "step_index",
    "sample_graph",
    "bernoulli_edges",
    "merged_partition_count",
    "local_degree_profile",
    "read_graph_text",
    "write_graph_text",
]


@dataclass(frozen=True, eq=False)
class StepGraphon:
    """Symmetric matrix of edge probabilities on equitable partitions."""

    values: object

    def __post_init__(self):
        values = self.values
        if sp.issparse(values):
            values = sp.csr_matrix(values, dtype=float)
            if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 1:
                raise InvalidInputError(f"graphon must be square with N >= 1, got {values.shape}")
            data = values.data
            if data.size and (not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1):
                raise InvalidInputError("graphon entries must lie in [0, 1]")
            if (values != values.T).nnz:
                raise InvalidInputError("graphon matrix must be symmetric")
        else:
            values = np.array(values, dtype=float)
            if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 1:
                raise InvalidInputError(f"graphon must be square with N >= 1, got {values.shape}")
            if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1:
                raise InvalidInputError("graphon entries must lie in [0, 1]")
            if not np.array_equal(values, values.T):
                raise InvalidInputError("graphon matrix must be symmetric")
            values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def partitions(self):
        return self.values.shape[0]

    @property
    def is_sparse(self):
        return sp.issparse(self.values)

    def dense(self):
        if self.is_sparse:
            return self.values.toarray()
        return np.asarray(self.values)


@dataclass(frozen=True, eq=False)
class StepSignal:
    """Row-per-partition matrix of a vector-valued step function."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise InvalidInputError(f"signal must be an N x M matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("signal entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def partitions(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


def _canonical_edges(edges, num_nodes):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2) if len(edges) else np.zeros((0, 2), np.int64)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise InvalidInputError(f"edge endpoint out of range for a graph with {num_nodes} nodes")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise InvalidInputError("self-loops are not allowed")
    edges = np.sort(edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
        raise InvalidInputError("duplicate edges are not allowed")
    return edges


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected simple graph with optional node attributes, label and latent positions.

    Edges are stored canonically as an ``(E, 2)`` integer array with ``i < j``,
    sorted lexicographically.
    """

    num_nodes: int
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    attributes: Optional[np.ndarray] = None
    label: Optional[int] = None
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 1:
            raise InvalidInputError("a graph needs at least one node")
        object.__setattr__(self, "num_nodes", n)
        edges = _canonical_edges(self.edges, n)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if self.attributes is not None:
            attrs = np.array(self.attributes, dtype=float)
            if attrs.ndim == 1:
                attrs = attrs[:, None]
            if attrs.shape[0] != n:
                raise InvalidInputError(f"attributes have {attrs.shape[0]} rows for {n} nodes")
            if not np.all(np.isfinite(attrs)):
                raise InvalidInputError("attributes must be finite")
            attrs.setflags(write=False)
            object.__setattr__(self, "attributes", attrs)
        if self.positions is not None:
            pos = np.array(self.positions, dtype=float).ravel()
            if pos.shape[0] != n or np.any(pos < 0) or np.any(pos > 1):
                raise InvalidInputError("positions must hold one value in [0, 1] per node")
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def num_edges(self):
        return len(self.edges)

    def adjacency(self, sparse=False):
        n = self.num_nodes
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return adj if sparse else adj.toarray()

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def permuted(self, perm):
        """Relabel node ``k`` as ``perm[k]``."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        attrs = None if self.attributes is None else self.attributes[inverse]
        pos = None if self.positions is None else self.positions[inverse]
        return AttributedGraph(self.num_nodes, perm[self.edges], attrs, self.label, pos)

    def with_attributes(self, attributes):
        return AttributedGraph(self.num_nodes, self.edges, attributes, self.label, self.positions)


def induce_graphon(graph, sparse=False):
    """Induce the 0/1 step graphon (and signal, if attributed) of ``graph``.

    Parameters
    ----------
    graph : AttributedGraph
    sparse : bool
        Back the graphon with a CSR matrix instead of a dense array.

    Returns
    -------
    (StepGraphon, StepSignal or None)
    """
    if not isinstance(graph, AttributedGraph):
        raise InvalidInputError(f"expected an AttributedGraph, got {type(graph).__name__}")
    graphon = StepGraphon(graph.adjacency(sparse=sparse))
    signal = None if graph.attributes is None else StepSignal(graph.attributes)
    return graphon, signal


def step_index(t, partitions):
    """Partition index of ``t`` in [0, 1]; ``t = 1`` clamps to the last partition."""
    t = np.asarray(t, dtype=float)
    idx = np.floor(t * partitions).astype(np.int64)
    return np.minimum(idx, partitions - 1)


def _check_unit(*values):
    for v in values:
        arr = np.asarray(v, dtype=float)
        if not np.all((arr >= 0) & (arr <= 1)):
            raise InvalidInputError(f"graphon arguments must lie in [0, 1], got {v}")


def evaluate(g, u, v):
    """Evaluate the step graphon ``g`` at ``(u, v)``."""
    _check_unit(u, v)
    n = g.partitions
    i, j = int(step_index(u, n)), int(step_index(v, n))
    return float(g.values[i, j])


def bernoulli_edges(probs, rng):
    """Draw a simple undirected edge set from a ``K x K`` probability matrix.

    Only the strict upper triangle is sampled; the diagonal never produces
    self-loops.
    """
    k = probs.shape[0]
    rows, cols = np.triu_indices(k, 1)
    draws = rng.random(len(rows))
    keep = draws < probs[rows, cols]
    return np.stack([rows[keep], cols[keep]], axis=1)


def sample_graph(g, s, K, sigma=1.0, rng=None):
    """Sample a ``K``-node attributed graph from a step graphon and signal.

    Node positions are drawn uniformly on [0, 1] and kept on the returned
    graph.  Attributes, when ``s`` is given, are Gaussian around the signal
    value at each node's position with standard deviation ``sigma``.
    """
    if K < 1:
        raise InvalidInputError("sample size K must be positive")
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")
    if s is not None and s.partitions != g.partitions:
        raise InvalidInputError("graphon and signal partitions differ")
    rng = check_random_state(rng)
    positions = rng.random(K)
    idx = step_index(positions, g.partitions)
    sub = g.values[idx][:, idx]
    probs = sub.toarray() if sp.issparse(sub) else np.asarray(sub)
    edges = bernoulli_edges(probs, rng)
    attrs = None
    if s is not None:
        mean = s.values[idx]
        attrs = mean + sigma * rng.standard_normal(mean.shape)
    return AttributedGraph(K, edges, attrs, positions=positions)


def merged_partition_count(counts):
    """Number of partitions of a convex combination of step functions.

    Counts distinct interior landmarks ``i / N_c`` over all factors exactly
    (rational arithmetic) and adds one.
    """
    counts = [int(c) for c in counts]
    if not counts:
        raise InvalidInputError("need at least one partition count")
    if any(c < 1 for c in counts):
        raise InvalidInputError("partition counts must be positive")
    landmarks = {Fraction(i, c) for c in counts for i in range(1, c)}
    return len(landmarks) + 1


def local_degree_profile(graph):
    """Per-node [degree, min, max, mean, std] of neighbour degrees.

    Isolated nodes get zeros for the four neighbour statistics; the standard
    deviation is the population one.
    """
    n = graph.num_nodes
    deg = graph.degrees().astype(float)
    out = np.zeros((n, 5))
    out[:, 0] = deg
    if graph.num_edges:
        adj = graph.adjacency(sparse=True)
        for k in range(n):
            nbrs = adj.indices[adj.indptr[k]:adj.indptr[k + 1]]
            if len(nbrs) == 0:
                continue
            d = deg[nbrs]
            out[k, 1:] = d.min(), d.max(), d.mean(), d.std()
    return StepSignal(out)


def read_graph_text(path):
    """Read the ``N M`` / edge lines / optional attribute lines format."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty graph file")
    try:
        n, m = (int(t) for t in lines[0].split())
    except ValueError:
        raise ParseError(f"{path}:1: expected 'N M' header") from None
    if len(lines) < 1 + m:
        raise ParseError(f"{path}: header announces {m} edges, found {len(lines) - 1} lines")
    edges = []
    for lineno, line in enumerate(lines[1:1 + m], start=2):
        try:
            i, j = (int(t) for t in line.split())
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected 'i j'") from None
        edges.append((i, j))
    rest = lines[1 + m:]
    attrs = None
    if rest:
        if len(rest) != n:
            raise ParseError(f"{path}: expected {n} attribute lines, found {len(rest)}")
        try:
            attrs = np.array([[float(t) for t in line.split(",")] for line in rest])
        except ValueError as exc:
            raise ParseError(f"{path}: bad attribute line ({exc})") from None
    try:
        return AttributedGraph(n, edges, attrs)
    except InvalidInputError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_graph_text(path, graph):
    with open(path, "w") as fh:
        fh.write(f"{graph.num_nodes} {graph.num_edges}\n")
        for i, j in graph.edges:
            fh.write(f"{i} {j}\n")
        if graph.attributes is not None:
            for row in graph.attributes:
                fh.write(",".join(f"{x:.12g}" for x in row) + "\n")
