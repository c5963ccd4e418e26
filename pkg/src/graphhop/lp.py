"""Classical label propagation with symmetric normalization.

The iteration is ``H <- alpha * S @ H + (1 - alpha) * H0`` with
``S = D^-1/2 A D^-1/2``; its fixed point ``(1 - alpha)(I - alpha S)^-1 H0``
is available through a dense linear solve for small graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, SolverError, ValidationError
from .graph import one_hot, symmetric_normalized_adjacency, unnormalized_laplacian

CLOSED_FORM_MAX_NODES = 5000


@dataclass
class LPConfig:
    alpha: float = 0.99
    max_iter: int = 1000
    tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("LP alpha must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be positive")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")


@dataclass
class LPResult:
    H: np.ndarray
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.residuals)

    def predictions(self):
        return np.argmax(self.H, axis=1)


def initial_embedding(n, labeled, labels, num_classes):
    """``H0`` with one-hot rows on ``labeled`` and zeros elsewhere.

    ``labels`` holds the class of each node in ``labeled``, in the same order.
    """
    H0 = np.zeros((n, num_classes))
    H0[np.asarray(labeled, dtype=np.int64)] = one_hot(labels, num_classes)
    return H0


def _as_matrix(g, H0):
    H0 = np.asarray(getattr(H0, "values", H0), dtype=np.float64)
    if H0.ndim != 2 or H0.shape[0] != g.n:
        raise ValidationError(f"H0 must have {g.n} rows, got shape {H0.shape}")
    return H0


def lp_iterate(g, H0, cfg=None, callback=None):
    """Run the propagation until the Frobenius step falls below ``cfg.tol``.

    Hitting ``max_iter`` is reported through ``converged=False``.
    ``callback(t, H, residual)`` is invoked after every step.
    """
    cfg = cfg or LPConfig()
    H0 = _as_matrix(g, H0)
    S = symmetric_normalized_adjacency(g)
    base = (1.0 - cfg.alpha) * H0
    H = H0.copy()
    result = LPResult(H)
    for _ in range(cfg.max_iter):
        H_next = cfg.alpha * (S @ H) + base
        res = float(np.linalg.norm(H_next - H))
        result.residuals.append(res)
        H = H_next
        if callback is not None:
            callback(len(result.residuals), H, res)
        if res < cfg.tol:
            result.converged = True
            break
    result.H = H
    return result


def lp_closed_form(g, H0, alpha):
    """Exact fixed point via a dense solve of ``(I - alpha S) H = (1 - alpha) H0``."""
    if not 0 < alpha < 1:
        raise ValidationError("LP alpha must lie in (0, 1)")
    H0 = _as_matrix(g, H0)
    if g.n > CLOSED_FORM_MAX_NODES:
        raise CapacityError(
            f"closed form is limited to {CLOSED_FORM_MAX_NODES} nodes, graph has {g.n}")
    S = symmetric_normalized_adjacency(g).toarray()
    system = np.eye(g.n) - alpha * S
    try:
        return np.linalg.solve(system, (1.0 - alpha) * H0)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"propagation system is singular: {exc}") from None


def lp_cost(g, H, labeled, Y_l, alpha):
    """``||H_l - Y_l||_F^2 + alpha * Tr(H^T L H)`` with ``L = D - A``."""
    H = _as_matrix(g, H)
    labeled = np.asarray(labeled, dtype=np.int64)
    Y_l = np.asarray(Y_l, dtype=np.float64)
    if Y_l.shape != (len(labeled), H.shape[1]):
        raise ValidationError(f"Y_l has shape {Y_l.shape}, expected {(len(labeled), H.shape[1])}")
    fit = float(np.sum((H[labeled] - Y_l) ** 2))
    L = unnormalized_laplacian(g)
    smooth = float(np.sum(H * (L @ H)))
    return fit + alpha * smooth
