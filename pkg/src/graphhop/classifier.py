"""Mini-batch logistic regression trained with Adam.

Three loss terms are supported and can be mixed with weights
``alpha``/``beta``:

* supervised cross-entropy on labeled rows, averaged over the labeled rows;
* consistency cross-entropy ``H(target, p)`` on unlabeled rows against fixed
  (sharpened) targets;
* entropy ``H(p, p)`` of the predictions on unlabeled rows.

The two unlabeled terms are scaled by ``1 / (n_unlabeled * n_classes)``
unless ``class_scaling`` is switched off, in which case only by
``1 / n_unlabeled``.

Multi-class models use a softmax over classes; multi-label models use an
independent sigmoid per label and binary cross-entropy summed over labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)


@dataclass
class LRModel:
    weights: np.ndarray  # (c, p)
    bias: np.ndarray  # (c,)
    multilabel: bool = False

    @classmethod
    def zeros(cls, n_features, n_classes, multilabel=False):
        return cls(np.zeros((n_classes, n_features)), np.zeros(n_classes), multilabel)

    @property
    def n_features(self):
        return self.weights.shape[1]

    @property
    def n_classes(self):
        return self.weights.shape[0]

    def copy(self):
        return LRModel(self.weights.copy(), self.bias.copy(), self.multilabel)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))

    def logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width {X.shape[-1] if X.ndim else 0} does not match model width {self.n_features}")
        return X @ self.weights.T + self.bias


def _log_softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def _log_sigmoid(Z):
    # log(sigmoid(z)) = -log(1 + exp(-z)), evaluated without overflow
    return -np.logaddexp(0.0, -Z)


def _probabilities(Z, multilabel):
    if multilabel:
        return np.exp(_log_sigmoid(Z))
    return np.exp(_log_softmax(Z))


def predict(model, features):
    """Class probabilities for each row of ``features``."""
    return _probabilities(model.logits(features), model.multilabel)


def sharpen(p, T):
    """Temperature sharpening ``p_i^(1/T) / sum_j p_j^(1/T)``.

    Accepts a single vector or a matrix of rows.  For multi-label rows use
    :func:`sharpen_bernoulli`.
    """
    if T <= 0:
        raise ValidationError("temperature must be positive")
    p = np.asarray(p, dtype=np.float64)
    rows = np.atleast_2d(p)
    if np.any(rows < 0):
        raise ValidationError("sharpen expects non-negative entries")
    if np.any(rows.max(axis=1) <= 0):
        raise ValidationError("sharpen needs at least one positive entry per row")
    with np.errstate(divide="ignore"):
        logp = np.log(rows) / T
    logp -= logp.max(axis=1, keepdims=True)
    out = np.exp(logp)
    out /= out.sum(axis=1, keepdims=True)
    return out.reshape(p.shape)


def sharpen_bernoulli(p, T):
    """Sharpen each entry as the two-outcome distribution ``(p, 1 - p)``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("Bernoulli probabilities must lie in [0, 1]")
    pair = np.stack([p.reshape(-1), 1.0 - p.reshape(-1)], axis=1)
    return sharpen(pair, T)[:, 0].reshape(p.shape)


class LossGrad(NamedTuple):
    value: float
    weights: np.ndarray
    bias: np.ndarray


def _cross_entropy_terms(Z, targets, multilabel):
    """Per-row ``H(t, p)`` and its gradient w.r.t. the logits."""
    if multilabel:
        ls = _log_sigmoid(Z)
        lns = _log_sigmoid(-Z)
        loss = -(targets * ls + (1 - targets) * lns).sum(axis=1)
        return loss, np.exp(ls) - targets
    lp = _log_softmax(Z)
    loss = -(targets * lp).sum(axis=1)
    p = np.exp(lp)
    return loss, p * targets.sum(axis=1, keepdims=True) - targets


def _entropy_terms(Z, multilabel):
    """Per-row ``H(p, p)`` and its gradient w.r.t. the logits."""
    if multilabel:
        ls = _log_sigmoid(Z)
        lns = _log_sigmoid(-Z)
        p = np.exp(ls)
        loss = -(p * ls + (1 - p) * lns).sum(axis=1)
        # dH/dz = -p(1-p) * z  per label
        return loss, -p * (1 - p) * Z
    lp = _log_softmax(Z)
    p = np.exp(lp)
    H = -(p * lp).sum(axis=1, keepdims=True)
    return H[:, 0], -p * (lp + H)


def _param_grad(X, dZ, scale):
    return scale * (dZ.T @ X), scale * dZ.sum(axis=0)


def _check_targets(targets, multilabel, n_rows, n_classes, what):
    T = np.asarray(targets, dtype=np.float64)
    if T.shape != (n_rows, n_classes):
        raise ValidationError(f"{what} have shape {T.shape}, expected {(n_rows, n_classes)}")
    if not np.all(np.isfinite(T)) or T.min(initial=0) < 0 or T.max(initial=0) > 1:
        raise ValidationError(f"{what} must be probabilities in [0, 1]")
    if not multilabel and n_rows and not np.allclose(T.sum(axis=1), 1.0, atol=1e-6):
        raise ValidationError(f"{what} rows must sum to 1")
    return T


def loss_supervised(model, features, labels):
    """Mean cross-entropy over a labeled batch, with exact gradient."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValidationError("labeled batch is empty")
    Y = _check_targets(labels, model.multilabel, X.shape[0], model.n_classes, "labels")
    loss, dZ = _cross_entropy_terms(model.logits(X), Y, model.multilabel)
    scale = 1.0 / X.shape[0]
    return LossGrad(float(loss.sum() * scale), *_param_grad(X, dZ, scale))


def _unlabeled_scale(n_rows, n_classes, class_scaling):
    return 1.0 / (n_rows * n_classes) if class_scaling else 1.0 / n_rows


def loss_consistency(model, features, targets, class_scaling=True):
    """Cross-entropy against fixed soft targets; no gradient reaches the targets."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValidationError("unlabeled batch is empty")
    Tg = _check_targets(targets, model.multilabel, X.shape[0], model.n_classes, "targets")
    loss, dZ = _cross_entropy_terms(model.logits(X), Tg, model.multilabel)
    scale = _unlabeled_scale(X.shape[0], model.n_classes, class_scaling)
    return LossGrad(float(loss.sum() * scale), *_param_grad(X, dZ, scale))


def loss_entropy(model, features, class_scaling=True):
    """Self-entropy of the predictions; gradient flows through both slots."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValidationError("unlabeled batch is empty")
    loss, dZ = _entropy_terms(model.logits(X), model.multilabel)
    scale = _unlabeled_scale(X.shape[0], model.n_classes, class_scaling)
    return LossGrad(float(loss.sum() * scale), *_param_grad(X, dZ, scale))


@dataclass
class LossWeights:
    alpha: float = 0.0
    beta: float = 0.0
    T: float = 1.0
    class_scaling: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("loss weights alpha and beta must be >= 0")
        if self.T <= 0:
            raise ValidationError("temperature T must be > 0")

    @property
    def uses_unlabeled(self):
        return self.alpha > 0 or self.beta > 0


@dataclass
class AdamState:
    """Adam moments with decoupled weight decay (AdamW-style)."""

    lr: float = 0.01
    weight_decay: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: np.ndarray | None = None
    v_w: np.ndarray | None = None
    m_b: np.ndarray | None = None
    v_b: np.ndarray | None = None

    def reset(self):
        self.step = 0
        self.m_w = self.v_w = self.m_b = self.v_b = None

    def update(self, model, grad):
        if self.m_w is None or self.m_w.shape != model.weights.shape:
            self.m_w = np.zeros_like(model.weights)
            self.v_w = np.zeros_like(model.weights)
            self.m_b = np.zeros_like(model.bias)
            self.v_b = np.zeros_like(model.bias)
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for p, g, m, v in ((model.weights, grad.weights, self.m_w, self.v_w),
                           (model.bias, grad.bias, self.m_b, self.v_b)):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainSchedule:
    epochs: int = 1000
    batch_size: int = 512
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValidationError("epochs, batch_size and patience must be positive")


@dataclass
class TrainingSet:
    """Rows of ``features`` used for one classifier fit.

    ``labeled``/``labels`` feed the supervised term; ``unlabeled``/``targets``
    feed the consistency and entropy terms; ``validation``/``validation_labels``
    drive early stopping (when absent, the epoch training loss is monitored).
    """

    features: np.ndarray
    labeled: np.ndarray
    labels: np.ndarray
    unlabeled: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    targets: np.ndarray | None = None
    validation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    validation_labels: np.ndarray | None = None


@dataclass
class EpochLoss:
    epoch: int
    L_l: float
    L_u: float
    L_entropy: float
    total: float
    val_loss: float


@dataclass
class BatchAccounting:
    """Counts values resident during one mini-batch step.

    ``batch_values`` covers the batch inputs, targets, probabilities and
    logit gradients (grows with batch size); ``param_values`` covers the
    parameters, their gradients and both Adam moments (fixed by the model
    shape).  Peaks are tracked across every recorded step.
    """

    peak_batch_values: int = 0
    peak_param_values: int = 0
    steps: int = 0
    update_madds: int = 0

    def record(self, batch_rows, n_features, n_classes):
        batch = batch_rows * (n_features + 3 * n_classes)
        params = 4 * n_classes * (n_features + 1)
        self.peak_batch_values = max(self.peak_batch_values, batch)
        self.peak_param_values = max(self.peak_param_values, params)
        self.steps += 1
        # forward logits plus the weight-gradient product
        self.update_madds += 2 * batch_rows * n_features * n_classes

    @property
    def peak_values(self):
        return self.peak_batch_values + self.peak_param_values


def batch_loss(model, X_l, Y_l, X_u, T_u, weights):
    """Weighted three-term loss on one batch.

    Returns the three unweighted term values, the weighted total and the
    gradient of the total.  Logits are computed once per row group.
    """
    ml = model.multilabel
    c = model.n_classes
    values = [0.0, 0.0, 0.0]
    dZ_l = dZ_u = None
    if len(X_l):
        loss, dZ_l = _cross_entropy_terms(model.logits(X_l), Y_l, ml)
        values[0] = float(loss.sum()) / len(X_l)
        dZ_l /= len(X_l)
    if len(X_u) and (weights.alpha > 0 or weights.beta > 0):
        Z_u = model.logits(X_u)
        scale = _unlabeled_scale(len(X_u), c, weights.class_scaling)
        dZ_u = np.zeros_like(Z_u)
        if weights.alpha > 0:
            loss, d = _cross_entropy_terms(Z_u, T_u, ml)
            values[1] = float(loss.sum()) * scale
            dZ_u += (weights.alpha * scale) * d
        if weights.beta > 0:
            loss, d = _entropy_terms(Z_u, ml)
            values[2] = float(loss.sum()) * scale
            dZ_u += (weights.beta * scale) * d
    total = values[0] + weights.alpha * values[1] + weights.beta * values[2]
    gw = np.zeros_like(model.weights)
    gb = np.zeros_like(model.bias)
    for X, dZ in ((X_l, dZ_l), (X_u, dZ_u)):
        if dZ is not None:
            gw += dZ.T @ X
            gb += dZ.sum(axis=0)
    return values, total, LossGrad(total, gw, gb)


def _validation_loss(model, data):
    if data.validation_labels is None or len(data.validation) == 0:
        return None
    X = data.features[data.validation]
    Z = model.logits(X)
    loss, _ = _cross_entropy_terms(Z, np.asarray(data.validation_labels, dtype=np.float64),
                                   model.multilabel)
    return float(loss.mean())


def train(model, data, weights=None, optimizer=None, schedule=None, accounting=None):
    """Fit ``model`` in place and return ``(model, trace)``.

    Labeled and unlabeled rows are shuffled together each epoch; every batch
    applies the loss scalings to its own members.  Unlabeled rows take part
    only when ``alpha`` or ``beta`` is positive.  Training stops after
    ``schedule.patience`` epochs without improvement of the monitored loss
    and restores the best parameters seen.
    """
    weights = weights or LossWeights()
    optimizer = optimizer if optimizer is not None else AdamState()
    schedule = schedule or TrainSchedule()
    X = np.asarray(data.features, dtype=np.float64)
    labeled = np.asarray(data.labeled, dtype=np.int64)
    if len(labeled) == 0:
        raise ValidationError("training needs at least one labeled example")
    Y = _check_targets(data.labels, model.multilabel, len(labeled), model.n_classes, "labels")

    use_u = weights.uses_unlabeled and len(data.unlabeled) > 0
    if use_u:
        unlabeled = np.asarray(data.unlabeled, dtype=np.int64)
        Tu = _check_targets(data.targets, model.multilabel, len(unlabeled),
                            model.n_classes, "targets")
    else:
        unlabeled = np.zeros(0, dtype=np.int64)
        Tu = np.zeros((0, model.n_classes))

    rows = np.concatenate([labeled, unlabeled])
    # row position -> index into Y (>= 0) or into Tu (encoded as -1 - j)
    slot = np.concatenate([np.arange(len(labeled)), -1 - np.arange(len(unlabeled))])
    rng = np.random.default_rng(schedule.seed)

    trace = []
    best_loss = np.inf
    best = model.copy()
    stale = 0
    for epoch in range(schedule.epochs):
        order = rng.permutation(len(rows))
        sums = np.zeros(4)
        n_batches = 0
        for b, start in enumerate(range(0, len(rows), schedule.batch_size)):
            pick = order[start:start + schedule.batch_size]
            s = slot[pick]
            lab = s >= 0
            X_l = X[rows[pick[lab]]]
            Y_l = Y[s[lab]]
            X_u = X[rows[pick[~lab]]]
            T_u = Tu[-1 - s[~lab]]
            if accounting is not None:
                accounting.record(len(pick), X.shape[1], model.n_classes)
            vals, total, grad = batch_loss(model, X_l, Y_l, X_u, T_u, weights)
            if not np.isfinite(total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {b}", rows=rows[pick].copy())
            # overflow here is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                optimizer.update(model, grad)
            if not model.is_finite():
                raise NumericalError(
                    f"non-finite parameters after epoch {epoch}, batch {b}", rows=rows[pick].copy())
            sums += (*vals, total)
            n_batches += 1
        means = sums / n_batches
        val = _validation_loss(model, data)
        monitored = means[3] if val is None else val
        trace.append(EpochLoss(epoch, *map(float, means), float(monitored)))
        if monitored < best_loss:
            best_loss = monitored
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= schedule.patience:
                break
    model.weights[...] = best.weights
    model.bias[...] = best.bias
    log.debug("trained %d epochs, best monitored loss %.6f", len(trace), best_loss)
    return model, trace


def accuracy(model, features, labels):
    """Exact-match accuracy of argmax predictions (multi-class only)."""
    pred = np.argmax(predict(model, features), axis=1)
    return float(np.mean(pred == np.asarray(labels)))
