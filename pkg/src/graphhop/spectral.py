"""Graph Fourier analysis of label signals.

Labels are projected onto the ``k`` lowest- or highest-frequency
eigenvectors of ``L = D - A`` and re-classified by argmax; comparing the two
accuracy curves shows how much of the label signal is smooth on the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ValidationError
from .graph import one_hot, unnormalized_laplacian

DENSE_MAX_NODES = 20000


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns

    @property
    def n(self):
        return len(self.eigenvalues)

    def components(self, k, order="low"):
        """The ``k`` basis columns at the low or high end of the spectrum.

        High-order columns are returned in descending-eigenvalue order.
        """
        if not 1 <= k <= self.n:
            raise ValidationError(f"k must lie in [1, {self.n}], got {k}")
        if order == "low":
            return self.eigenvectors[:, :k]
        if order == "high":
            return self.eigenvectors[:, ::-1][:, :k]
        raise ValidationError(f"order must be 'low' or 'high', got {order!r}")


def eigendecompose(L, symmetry_tol=1e-10):
    """Full eigendecomposition of a symmetric matrix (dense LAPACK ``eigh``)."""
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValidationError("matrix must be square")
    if n > DENSE_MAX_NODES:
        raise CapacityError(f"dense eigendecomposition limited to {DENSE_MAX_NODES} nodes, got {n}")
    M = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
    if n and np.max(np.abs(M - M.T)) > symmetry_tol * max(1.0, np.max(np.abs(M))):
        raise ValidationError("matrix is not symmetric")
    w, Q = np.linalg.eigh(M)
    return SpectralBasis(eigenvalues=w, eigenvectors=Q)


def bandlimited_reconstruction(basis, Y, k, order="low"):
    """Orthogonal projection of ``Y`` onto ``k`` low or high frequency components."""
    Qk = basis.components(k, order)
    Y = np.asarray(Y, dtype=np.float64)
    return Qk @ (Qk.T @ Y)


@dataclass
class FrequencyCurve:
    fractions: np.ndarray
    k: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def rows(self):
        return list(zip(self.fractions.tolist(), self.low.tolist(), self.high.tolist()))


def percentage_steps(n, steps=100):
    """Component counts at 1%, 2%, ..., 100% of ``n`` (at least one)."""
    fr = np.arange(1, steps + 1) / steps
    return fr, np.maximum(1, np.round(fr * n).astype(np.int64))


def _cumulative_accuracy(Q, coeffs, ks, labels):
    acc = np.empty(len(ks))
    Yhat = np.zeros((Q.shape[0], coeffs.shape[1]))
    done = 0
    for i, k in enumerate(ks):
        if k > done:
            Yhat += Q[:, done:k] @ coeffs[done:k]
            done = k
        acc[i] = np.mean(np.argmax(Yhat, axis=1) == labels)
    return acc


def frequency_accuracy_curve(g, labels, ks=None, basis=None, num_classes=None, steps=100):
    """Accuracy of argmax classification of band-limited label reconstructions.

    ``ks`` defaults to the ``steps``-point percentage grid of
    :func:`percentage_steps`.
    Returns low-order and high-order accuracy for every ``k``; the
    reconstructions are built incrementally so the cost is one pass over the
    basis.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (g.n,):
        raise ValidationError("frequency curves need a ground-truth label for every node")
    c = int(num_classes or labels.max() + 1)
    if ks is None:
        fractions, ks = percentage_steps(g.n, steps)
    else:
        ks = np.asarray(ks, dtype=np.int64)
        fractions = ks / g.n
    if np.any(ks < 1) or np.any(ks > g.n):
        raise ValidationError(f"component counts must lie in [1, {g.n}]")
    if np.any(np.diff(ks) < 0):
        raise ValidationError("component counts must be non-decreasing")
    basis = basis or eigendecompose(unnormalized_laplacian(g))
    Y = one_hot(labels, c)
    Q = basis.eigenvectors
    Qr = Q[:, ::-1]
    low = _cumulative_accuracy(Q, Q.T @ Y, ks, labels)
    high = _cumulative_accuracy(Qr, Qr.T @ Y, ks, labels)
    return FrequencyCurve(fractions=np.asarray(fractions, dtype=np.float64), k=ks,
                          low=low, high=high)
