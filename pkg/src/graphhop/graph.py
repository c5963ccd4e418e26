"""Sparse undirected graph storage and hop-averaged aggregation.

The adjacency is kept in compressed-row form (``indptr``/``indices``) with
sorted neighbor lists, no self-loops and no duplicate edges.  All matrices
handed out are ``scipy.sparse.csr_matrix`` instances built on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, ValidationError


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable unweighted undirected graph with node attributes."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    attributes: np.ndarray

    @property
    def num_edges(self):
        """Number of undirected edges."""
        return len(self.indices) // 2

    @cached_property
    def degrees(self):
        return _readonly(np.diff(self.indptr))

    @property
    def max_degree(self):
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @cached_property
    def adjacency(self):
        """Binary symmetric adjacency ``A`` as CSR."""
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edge_list(self):
        """Canonical ``(u, v)`` pairs with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])


def build_graph(edges, attributes=None, n=None):
    """Build a :class:`Graph` from an edge list.

    Edges are symmetrized; duplicates and self-loops are dropped.  ``n``
    defaults to the attribute row count.  When there are no attributes an
    ``n x 0`` attribute matrix is stored.
    """
    if attributes is not None:
        try:
            X = np.array(attributes, dtype=np.float64)
        except ValueError as exc:
            raise GraphError(f"ragged or non-numeric attribute rows: {exc}") from None
        if X.ndim == 1 and X.size == 0 and n is not None:
            X = np.zeros((n, 0))
        if X.ndim != 2:
            raise GraphError(f"attributes must be a 2-D matrix, got shape {X.shape}")
        if n is None:
            n = X.shape[0]
        elif X.shape[0] != n:
            raise GraphError(f"attribute matrix has {X.shape[0]} rows, expected {n}")
    else:
        if n is None:
            raise GraphError("node count n is required when attributes are omitted")
        X = np.zeros((n, 0))
    n = int(n)
    if n < 0:
        raise GraphError("node count must be non-negative")

    E = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
    if E.size == 0:
        E = np.zeros((0, 2), dtype=np.int64)
    if E.ndim != 2 or E.shape[1] != 2:
        raise GraphError(f"edge list must be pairs, got shape {E.shape}")
    if not np.issubdtype(E.dtype, np.integer):
        if not np.all(np.equal(np.mod(E, 1), 0)):
            raise GraphError("node ids must be integers")
        E = E.astype(np.int64)
    E = E.astype(np.int64, copy=False)
    bad = (E < 0) | (E >= n)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise GraphError(f"edge {tuple(int(v) for v in E[row])} has a node id outside [0, {n})")

    E = E[E[:, 0] != E[:, 1]]
    both = np.concatenate([E, E[:, ::-1]])
    # unique() on the packed (row, col) key dedups and sorts neighbor lists
    key = both[:, 0] * max(n, 1) + both[:, 1]
    key = np.unique(key)
    rows, cols = np.divmod(key, max(n, 1))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return Graph(n=n, indptr=_readonly(indptr), indices=_readonly(cols.astype(np.int64)),
                 attributes=_readonly(X))


def normalized_adjacency(g):
    """Row-stochastic ``D^-1 A``; rows of isolated nodes stay zero."""
    deg = g.degrees.astype(np.float64)
    inv = np.zeros_like(deg)
    np.divide(1.0, deg, out=inv, where=deg > 0)
    data = np.repeat(inv, g.degrees)
    return sp.csr_matrix((data, g.indices, g.indptr), shape=(g.n, g.n))


def symmetric_normalized_adjacency(g):
    """``D^-1/2 A D^-1/2`` with ``D^-1/2`` set to zero for isolated nodes."""
    deg = g.degrees.astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=inv_sqrt, where=deg > 0)
    rows = np.repeat(np.arange(g.n), g.degrees)
    data = inv_sqrt[rows] * inv_sqrt[g.indices]
    return sp.csr_matrix((data, g.indices, g.indptr), shape=(g.n, g.n))


def unnormalized_laplacian(g):
    """Combinatorial Laplacian ``L = D - A``."""
    return (sp.diags(g.degrees.astype(np.float64)) - g.adjacency).tocsr()


@dataclass(frozen=True, eq=False)
class AggregatedMatrix:
    """Column-wise concatenation ``[S, ÃS, Ã²S, ...]`` of hop averages."""

    values: np.ndarray
    hops: int
    width: int

    def block(self, m):
        if not 0 <= m <= self.hops:
            raise ValidationError(f"hop {m} outside [0, {self.hops}]")
        return self.values[:, m * self.width:(m + 1) * self.width]

    @property
    def boundaries(self):
        return [(m * self.width, (m + 1) * self.width) for m in range(self.hops + 1)]

    def blocks(self, *ms):
        """Concatenate the requested blocks, e.g. ``blocks(0, 2)``."""
        return np.hstack([self.block(m) for m in ms])


def aggregate(g, source, hops, operator=None):
    """Stack ``Ã^m @ source`` for ``m = 0..hops``.

    Each block is obtained from the previous one by a single sparse
    product, so ``Ã^m`` is never formed.  ``operator`` lets callers reuse a
    precomputed ``normalized_adjacency(g)``.
    """
    src = np.asarray(source, dtype=np.float64)
    if src.ndim == 1:
        src = src[:, None]
    if src.shape[0] != g.n:
        raise ValidationError(f"source has {src.shape[0]} rows, graph has {g.n} nodes")
    if hops < 0:
        raise ValidationError("hop count must be >= 0")
    A = normalized_adjacency(g) if operator is None else operator
    blocks = [src]
    cur = src
    for _ in range(hops):
        cur = A @ cur
        blocks.append(cur)
    return AggregatedMatrix(values=np.hstack(blocks), hops=hops, width=src.shape[1])


@dataclass(frozen=True, eq=False)
class NodeSplit:
    """Transductive split: labeled nodes, plus validation/test among the rest.

    ``unlabeled`` is every node that is not labeled; validation and test are
    disjoint subsets of it.
    """

    n: int
    labeled: np.ndarray
    validation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    seed: int | None = None

    def __post_init__(self):
        for name in ("labeled", "validation", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
            if arr.size and (arr.min() < 0 or arr.max() >= self.n):
                raise ValidationError(f"{name} indices outside [0, {self.n})")
            if len(np.unique(arr)) != len(arr):
                raise ValidationError(f"{name} indices contain duplicates")
            object.__setattr__(self, name, _readonly(arr))
        lab = set(self.labeled.tolist())
        if lab & set(self.validation.tolist()) or lab & set(self.test.tolist()):
            raise ValidationError("validation/test must be disjoint from the labeled set")
        if set(self.validation.tolist()) & set(self.test.tolist()):
            raise ValidationError("validation and test sets overlap")

    @cached_property
    def unlabeled(self):
        mask = np.ones(self.n, dtype=bool)
        mask[self.labeled] = False
        return _readonly(np.flatnonzero(mask))


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class LabelEmbedding:
    """Per-node class-probability rows ``H`` (n x c).

    In multi-class mode rows are probability vectors; in multi-label mode
    each entry is an independent Bernoulli probability.
    """

    values: np.ndarray
    multilabel: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError("label embedding must be a 2-D matrix")
        object.__setattr__(self, "values", v)

    def validate(self, labeled=None, atol=1e-9):
        v = self.values
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < -atol or v.max(initial=0.0) > 1 + atol:
            raise ValidationError("label embedding entries must lie in [0, 1]")
        if not self.multilabel:
            if not np.allclose(v.sum(axis=1), 1.0, rtol=0, atol=atol):
                raise ValidationError("multi-class rows must sum to 1")
        if labeled is not None and len(labeled):
            rows = v[labeled]
            if not np.all((rows == 0.0) | (rows == 1.0)):
                raise ValidationError("labeled rows must be exact one-hot/multi-hot vectors")
        return self

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def num_classes(self):
        return self.values.shape[1]

    def predictions(self, threshold=0.5):
        """Argmax class ids (lowest index wins ties) or a thresholded label matrix."""
        if self.multilabel:
            return (self.values >= threshold).astype(np.int8)
        return np.argmax(self.values, axis=1)
