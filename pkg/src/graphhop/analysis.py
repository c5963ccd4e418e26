"""Hop-distance partitions, sufficiency bounds and cost accounting.

A node is *sufficient* after ``t`` iterations of ``k``-hop propagation once
some labeled node lies within ``k * t`` hops of it.  The helpers here count
sufficient nodes exactly by multi-source BFS and compare the counts with
the degree-based upper bound ``j d (d^(kt) - 1) / (d - 1)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

UNREACHABLE = -1


@dataclass(frozen=True, eq=False)
class HopPartition:
    """Minimum hop distance from every node to the labeled set.

    ``distance`` holds ``UNREACHABLE`` (-1) for nodes in label-free
    components; ``subsets[i]`` lists the nodes at distance exactly ``i``.
    """

    distance: np.ndarray
    subsets: list

    @property
    def n(self):
        return len(self.distance)

    @property
    def max_distance(self):
        return len(self.subsets) - 1

    @property
    def unreachable(self):
        return np.flatnonzero(self.distance == UNREACHABLE)

    @property
    def num_labeled(self):
        return len(self.subsets[0])

    def histogram(self):
        return [len(s) for s in self.subsets]


def hop_partition(g, labeled):
    """Multi-source BFS from ``labeled``."""
    labeled = np.unique(np.asarray(labeled, dtype=np.int64))
    if len(labeled) == 0:
        raise ValidationError("hop partition needs at least one labeled node")
    if labeled.min() < 0 or labeled.max() >= g.n:
        raise ValidationError(f"labeled indices outside [0, {g.n})")
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[labeled] = 0
    queue = deque(labeled.tolist())
    indptr, indices = g.indptr, g.indices
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in indices[indptr[u]:indptr[u + 1]]:
            if dist[v] == UNREACHABLE:
                dist[v] = du
                queue.append(v)
    top = int(dist.max())
    order = np.argsort(dist, kind="stable")
    counts = np.bincount(dist[dist >= 0], minlength=top + 1)
    reach = order[dist[order] >= 0]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    subsets = [reach[bounds[i]:bounds[i + 1]] for i in range(top + 1)]
    return HopPartition(distance=dist, subsets=subsets)


def sufficiency_bound(n, d, j, k):
    """Minimum iteration count ``(1/k) log_d(1 + n (d - 1) / (j d))``.

    Real-valued; callers take the ceiling.
    """
    if d <= 1:
        raise ValidationError("the bound needs a maximum degree d > 1")
    if j < 1 or k < 1 or n < 1:
        raise ValidationError("n, j and k must be >= 1")
    return math.log1p(n * (d - 1) / (j * d)) / (k * math.log(d))


def sufficient_count_bound(n, d, j, k, t):
    """``min(n, j d (d^(kt) - 1) / (d - 1))``; ``d = 1`` uses the limit ``j k t``."""
    r = k * t
    if d <= 0 or r <= 0:
        return 0
    if d == 1:
        return min(n, j * r)
    # exact integer arithmetic; d^(kt) overflows floats quickly
    return min(n, j * d * (d ** r - 1) // (d - 1))


@dataclass
class SufficiencyCheck:
    empirical: int
    bound: int
    k: int
    t: int
    d: int
    j: int

    @property
    def holds(self):
        return self.empirical <= self.bound


def theorem1_check(g, labeled, k, t, d=None):
    """Count unlabeled nodes within ``k t`` hops and compare with the bound.

    ``d`` defaults to the graph's maximum degree.  The empirical count is
    ``|V_1 ∪ ... ∪ V_kt|`` (labeled nodes themselves are not counted).
    """
    part = hop_partition(g, labeled)
    d = g.max_degree if d is None else int(d)
    dist = part.distance
    empirical = int(np.count_nonzero((dist >= 1) & (dist <= k * t)))
    bound = sufficient_count_bound(g.n, d, part.num_labeled, k, t)
    return SufficiencyCheck(empirical, bound, k, t, d, part.num_labeled)


def first_sufficient_iteration(distance, k):
    """Iteration after which a node at ``distance`` hops becomes sufficient."""
    if distance < 0:
        return None
    return math.ceil(distance / k)


def expansions_to_cover(partition, k):
    """Iterations of ``k``-hop propagation needed to reach every reachable node."""
    return first_sufficient_iteration(partition.max_distance, k)


def coverage_curve(partition):
    """Cumulative fraction of nodes within ``i`` hops of the labels, i = 0..I.

    Entry ``i`` is ``|V_0 ∪ ... ∪ V_i| / n``; the last entry equals the
    reachable fraction.
    """
    counts = np.cumsum(partition.histogram())
    return np.arange(len(counts)), counts / partition.n


@dataclass
class BoundReport:
    n: int
    d: int
    j: int
    k: int
    bound: float
    ceil: int
    unreachable: int
    observed: int | None

    def as_row(self):
        return {"n": self.n, "d": self.d, "j": self.j, "k": self.k,
                "bound": f"{self.bound:.6f}", "ceil": self.ceil,
                "unreachable": self.unreachable,
                "observed_iterations": "" if self.observed is None else self.observed}


def bound_report(g, labeled, k, d=None):
    """Closed-form iteration bound next to the BFS-observed iteration count.

    Unreachable nodes are excluded from ``n``.
    """
    part = hop_partition(g, labeled)
    d = g.max_degree if d is None else int(d)
    n_reach = g.n - len(part.unreachable)
    j = part.num_labeled
    bound = sufficiency_bound(n_reach, d, j, k) if d > 1 else float("nan")
    return BoundReport(n=n_reach, d=d, j=j, k=k, bound=bound,
                       ceil=math.ceil(bound) if math.isfinite(bound) else -1,
                       unreachable=len(part.unreachable),
                       observed=expansions_to_cover(part, k))


@dataclass
class ComplexityReport:
    """Counted work and resident values for one propagation iteration.

    ``aggregation_madds`` is ``hops * nnz(Ã) * c``; the update entries come
    from :class:`graphhop.classifier.BatchAccounting`.
    """

    n: int
    nnz: int
    num_classes: int
    hops: int
    batch_size: int
    aggregation_madds: int
    update_madds: int
    steps: int
    peak_batch_values: int
    peak_param_values: int

    @property
    def peak_values(self):
        return self.peak_batch_values + self.peak_param_values

    @property
    def madds_per_batch(self):
        return (self.aggregation_madds + self.update_madds) / max(self.steps, 1)
