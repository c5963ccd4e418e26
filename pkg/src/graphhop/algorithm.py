"""GraphHop: attribute-based initialization followed by classifier-mediated
label propagation.

Initialization fits one logistic regression on hop-averaged attributes of
the labeled nodes and predicts an initial embedding ``H0``.  Each iteration
then

1. aggregates the previous embedding over ``1..M`` hops,
2. fits one classifier per hop ``m`` on ``[H, Ã^m H]`` (labeled rows are
   supervised, unlabeled rows are pulled toward their sharpened previous
   embedding and toward low-entropy predictions),
3. averages the per-hop predictions, blends in ``tau * H_prev`` and
   re-pins labeled rows to their one-hot labels.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import ComplexityReport
from .classifier import (AdamState, BatchAccounting, LossWeights, LRModel, TrainingSet,
                         TrainSchedule, predict, sharpen, sharpen_bernoulli, train)
from .errors import ValidationError
from .graph import LabelEmbedding, aggregate, normalized_adjacency, one_hot

log = logging.getLogger(__name__)

ENSEMBLES = ("per_hop", "concat")


@dataclass
class GraphHopConfig:
    hops: int = 2
    max_iter: int = 100
    T: float = 0.1
    alpha: float = 10.0
    beta: float = 1.0
    tau: float = 0.0
    batch_size: int = 512
    epochs: int = 1000
    patience: int = 10
    lr: float = 0.01
    weight_decay: float = 5e-5
    seed: int = 0
    class_scaling: bool = True
    ensemble: str = "per_hop"
    warm_start: bool = False
    init_hops: int | None = None

    def __post_init__(self):
        if self.hops < 1:
            raise ValidationError("hops (M) must be >= 1")
        if self.init_hops is not None and self.init_hops < 0:
            raise ValidationError("init_hops must be >= 0")
        if not 0 <= self.tau < 1:
            raise ValidationError("tau must lie in [0, 1)")
        if self.max_iter < 0:
            raise ValidationError("max_iter must be >= 0")
        if self.ensemble not in ENSEMBLES:
            raise ValidationError(f"ensemble must be one of {ENSEMBLES}")
        LossWeights(self.alpha, self.beta, self.T)
        TrainSchedule(self.epochs, self.batch_size, self.patience)

    @property
    def loss_weights(self):
        return LossWeights(self.alpha, self.beta, self.T, self.class_scaling)

    def schedule(self, *stream):
        seed = int(np.random.SeedSequence([self.seed, *stream]).generate_state(1)[0])
        return TrainSchedule(self.epochs, self.batch_size, self.patience, seed)

    def optimizer(self):
        return AdamState(lr=self.lr, weight_decay=self.weight_decay)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def label_matrix(labels, num_classes, multilabel=False):
    """Targets for the given ground truth: one-hot rows or a multi-hot matrix."""
    if multilabel:
        return np.asarray(labels, dtype=np.float64)
    return one_hot(labels, num_classes)


def _infer_classes(labels, multilabel):
    labels = np.asarray(labels)
    return labels.shape[1] if multilabel else int(labels.max()) + 1


def micro_f1(pred, truth):
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = np.count_nonzero(pred & truth)
    denom = np.count_nonzero(pred) + np.count_nonzero(truth)
    return 2.0 * tp / denom if denom else 1.0


def score(H, labels, idx, multilabel=False):
    """Accuracy (multi-class) or micro-F1 at threshold 0.5 (multi-label) on ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) == 0:
        return float("nan")
    labels = np.asarray(labels)
    if multilabel:
        return float(micro_f1(H[idx] >= 0.5, labels[idx]))
    return float(np.mean(np.argmax(H[idx], axis=1) == labels[idx]))


def mean_entropy(H, rows, multilabel=False):
    if len(rows) == 0:
        return 0.0
    P = np.clip(H[rows], 1e-300, 1.0)
    if multilabel:
        Q = np.clip(1.0 - H[rows], 1e-300, 1.0)
        ent = -(H[rows] * np.log(P) + (1.0 - H[rows]) * np.log(Q)).sum(axis=1)
    else:
        ent = -(H[rows] * np.log(P)).sum(axis=1)
    return float(ent.mean())


def _pin(H, labeled, targets):
    H[labeled] = targets
    return H


@dataclass
class InitResult:
    H: LabelEmbedding
    model: LRModel
    missing_classes: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def initialize(g, split, labels, cfg, multilabel=False, num_classes=None):
    """Fit the attribute classifier and return the initial embedding.

    ``labels`` is the ground truth for every node; only the labeled nodes
    (training) and validation nodes (early stopping) are read.
    """
    if len(split.labeled) == 0:
        raise ValidationError("initialization needs at least one labeled node")
    if g.attributes.shape[1] == 0:
        raise ValidationError("initialization needs node attributes")
    c = num_classes or _infer_classes(labels, multilabel)
    hops = cfg.hops if cfg.init_hops is None else cfg.init_hops
    X_M = aggregate(g, g.attributes, hops).values
    Y = label_matrix(labels, c, multilabel)

    missing = []
    if not multilabel:
        present = np.bincount(np.asarray(labels)[split.labeled], minlength=c)
        missing = [k for k in range(c) if present[k] == 0]
        if missing:
            warnings.warn(f"classes {missing} have no labeled node; they stay untrained",
                          RuntimeWarning, stacklevel=2)

    data = TrainingSet(features=X_M, labeled=split.labeled, labels=Y[split.labeled],
                       validation=split.validation, validation_labels=Y[split.validation])
    model = LRModel.zeros(X_M.shape[1], c, multilabel)
    _, trace = train(model, data, LossWeights(), cfg.optimizer(), cfg.schedule(0, 0))
    H = _pin(predict(model, X_M), split.labeled, Y[split.labeled])
    return InitResult(LabelEmbedding(H, multilabel), model, missing, trace)


def lr_predictor(inputs, data, cfg, schedule, warm=None, multilabel=False, accounting=None):
    """Default per-hop update: fit a fresh (or warm-started) LR and predict."""
    c = data.labels.shape[1]
    model = warm.copy() if warm is not None else LRModel.zeros(inputs.shape[1], c, multilabel)
    train(model, data, cfg.loss_weights, cfg.optimizer(), schedule, accounting)
    return predict(model, inputs), model


def _hop_inputs(agg, cfg):
    if cfg.ensemble == "concat":
        return [agg.values]
    return [agg.blocks(0, m) for m in range(1, agg.hops + 1)]


def iterate_once(g, H_prev, split, labels, cfg, models=None, iteration=1,
                 multilabel=False, predictor=None, operator=None, accounting=None):
    """One aggregation + update step; returns ``(H_next, models)``.

    ``predictor`` replaces the classifier fit for testing; it is called as
    ``predictor(hop, inputs, data)`` and must return ``(probabilities, model)``.
    """
    Hp = np.asarray(getattr(H_prev, "values", H_prev), dtype=np.float64)
    c = Hp.shape[1]
    Y = label_matrix(labels, c, multilabel)
    agg = aggregate(g, Hp, cfg.hops, operator=operator)

    unl = split.unlabeled
    if len(unl):
        raw = Hp[unl]
        targets = sharpen_bernoulli(raw, cfg.T) if multilabel else sharpen(
            _safe_rows(raw), cfg.T)
    else:
        targets = np.zeros((0, c))

    preds = []
    fitted = []
    for h, inputs in enumerate(_hop_inputs(agg, cfg)):
        data = TrainingSet(features=inputs, labeled=split.labeled, labels=Y[split.labeled],
                           unlabeled=unl, targets=targets, validation=split.validation,
                           validation_labels=Y[split.validation])
        if predictor is not None:
            p, model = predictor(h + 1, inputs, data)
        else:
            warm = models[h] if (cfg.warm_start and models) else None
            p, model = lr_predictor(inputs, data, cfg, cfg.schedule(iteration, h + 1), warm,
                                    multilabel, accounting)
        preds.append(p)
        fitted.append(model)
    # fixed hop order keeps the average bit-reproducible
    P = preds[0].copy()
    for p in preds[1:]:
        P += p
    P /= len(preds)
    H = (1.0 - cfg.tau) * P + cfg.tau * Hp if cfg.tau else P
    H = _pin(H, split.labeled, Y[split.labeled])
    return LabelEmbedding(H, multilabel), fitted


def _safe_rows(P):
    # an all-zero row (e.g. LP-style H) has no defined sharpening; use uniform
    P = P.copy()
    dead = P.max(axis=1) <= 0
    if dead.any():
        P[dead] = 1.0 / P.shape[1]
    return P


@dataclass
class TraceRow:
    iteration: int
    val_acc: float
    test_acc: float
    frobenius_delta: float
    mean_entropy: float


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def best_iteration(self):
        """Iteration with the highest validation accuracy (earliest on ties)."""
        val = self.column("val_acc")
        if np.all(np.isnan(val)):
            return self.rows[-1].iteration
        return self.rows[int(np.nanargmax(val))].iteration

    def at(self, iteration):
        return next(r for r in self.rows if r.iteration == iteration)


@dataclass
class GraphHopResult:
    H: LabelEmbedding
    trace: IterationTrace
    init: InitResult
    models: list
    best_H: LabelEmbedding
    complexity: list = field(default_factory=list)

    @property
    def best_iteration(self):
        return self.trace.best_iteration()

    @property
    def best_test_accuracy(self):
        return self.trace.at(self.best_iteration).test_acc

    def predictions(self, best=True):
        return (self.best_H if best else self.H).predictions()


def run(g, split, labels, cfg, multilabel=False, num_classes=None, predictor=None,
        track_complexity=False, callback=None):
    """Initialize, then run exactly ``cfg.max_iter`` iterations.

    The trace holds one row per stage, row 0 being the initialization.  No
    early exit happens across iterations; :meth:`IterationTrace.best_iteration`
    picks the stage with the best validation accuracy.
    """
    c = num_classes or _infer_classes(labels, multilabel)
    init = initialize(g, split, labels, cfg, multilabel, c)
    H = init.H
    trace = IterationTrace()
    ent_rows = split.unlabeled

    def record(t, H, delta):
        row = TraceRow(t, score(H.values, labels, split.validation, multilabel),
                       score(H.values, labels, split.test, multilabel), delta,
                       mean_entropy(H.values, ent_rows, multilabel))
        trace.rows.append(row)
        if callback is not None:
            callback(row)
        return row

    best_val = record(0, H, float("nan")).val_acc
    best_H = H
    A = normalized_adjacency(g)
    models = []
    complexity = []
    for t in range(1, cfg.max_iter + 1):
        acct = BatchAccounting() if track_complexity else None
        H_next, models = iterate_once(g, H, split, labels, cfg, models, t, multilabel,
                                      predictor, A, acct)
        delta = float(np.linalg.norm(H_next.values - H.values))
        H = H_next
        row = record(t, H, delta)
        if row.val_acc > best_val:
            best_val, best_H = row.val_acc, H
        if acct is not None:
            complexity.append(ComplexityReport(
                n=g.n, nnz=A.nnz, num_classes=c, hops=cfg.hops, batch_size=cfg.batch_size,
                aggregation_madds=cfg.hops * A.nnz * c, update_madds=acct.update_madds,
                steps=acct.steps, peak_batch_values=acct.peak_batch_values,
                peak_param_values=acct.peak_param_values))
        log.debug("iteration %d: val %.4f test %.4f delta %.3g", t, row.val_acc,
                  row.test_acc, delta)
    if len(split.validation) == 0:
        best_H = H
    return GraphHopResult(H, trace, init, models, best_H, complexity)
