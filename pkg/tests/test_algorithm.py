import numpy as np
import pytest

from graphhop.algorithm import (GraphHopConfig, IterationTrace, TraceRow, initialize,
                                iterate_once, micro_f1, run, score)
from graphhop.data import SplitSpec, generate_synthetic, sample_split
from graphhop.errors import ValidationError
from graphhop.graph import NodeSplit, normalized_adjacency, one_hot, unnormalized_laplacian

FAST = dict(epochs=200, patience=5)


def neighbor_average_seam(hop, inputs, data):
    """Returns the aggregated half of ``[H, Ã^m H]`` unchanged."""
    c = data.labels.shape[1]
    return inputs[:, c:].copy(), None


def random_H(rng, n, c):
    return rng.dirichlet(np.ones(c), size=n)


def test_identity_seam_gives_neighbor_average(two_clique):
    bundle, split = two_clique
    rng = np.random.default_rng(0)
    H = random_H(rng, 10, 2)
    cfg = GraphHopConfig(hops=1)
    H_next, _ = iterate_once(bundle.graph, H, split, bundle.labels, cfg,
                             predictor=neighbor_average_seam)
    expected = normalized_adjacency(bundle.graph) @ H
    expected[split.labeled] = one_hot(bundle.labels[split.labeled], 2)
    np.testing.assert_allclose(H_next.values, expected, atol=1e-15)


def test_per_hop_predictions_are_averaged(two_clique):
    bundle, split = two_clique
    rng = np.random.default_rng(1)
    H = random_H(rng, 10, 2)
    A = normalized_adjacency(bundle.graph)
    H_next, _ = iterate_once(bundle.graph, H, split, bundle.labels, GraphHopConfig(hops=2),
                             predictor=neighbor_average_seam)
    expected = (A @ H + A @ (A @ H)) / 2
    unl = split.unlabeled
    np.testing.assert_allclose(H_next.values[unl], expected[unl], atol=1e-15)


def test_residual_blend(two_clique):
    bundle, split = two_clique
    rng = np.random.default_rng(2)
    H = random_H(rng, 10, 2)
    A = normalized_adjacency(bundle.graph)
    H_next, _ = iterate_once(bundle.graph, H, split, bundle.labels,
                             GraphHopConfig(hops=1, tau=0.9), predictor=neighbor_average_seam)
    unl = split.unlabeled
    np.testing.assert_allclose(H_next.values[unl], (0.1 * (A @ H) + 0.9 * H)[unl], atol=1e-15)


def test_seam_receives_sharpened_targets(two_clique):
    bundle, split = two_clique
    H = random_H(np.random.default_rng(3), 10, 2)
    seen = {}

    def seam(hop, inputs, data):
        seen["data"] = data
        return neighbor_average_seam(hop, inputs, data)

    iterate_once(bundle.graph, H, split, bundle.labels, GraphHopConfig(hops=1, T=0.5),
                 predictor=seam)
    data = seen["data"]
    np.testing.assert_array_equal(data.unlabeled, split.unlabeled)
    P = H[split.unlabeled] ** 2
    np.testing.assert_allclose(data.targets, P / P.sum(axis=1, keepdims=True))
    np.testing.assert_array_equal(data.labels, one_hot(bundle.labels[split.labeled], 2))


def test_two_clique_converges_to_clique_labels(two_clique):
    bundle, split = two_clique
    cfg = GraphHopConfig(hops=1, max_iter=3, T=0.1, alpha=1.0, beta=0.0)
    res = run(bundle.graph, split, bundle.labels, cfg)
    np.testing.assert_array_equal(res.H.predictions(), bundle.labels)
    assert len(res.trace) == 4


def test_first_iteration_smooths_labels(two_clique):
    bundle, split = two_clique
    cfg = GraphHopConfig(hops=1, max_iter=1, T=0.1, alpha=1.0, beta=0.0)
    res = run(bundle.graph, split, bundle.labels, cfg)
    L = unnormalized_laplacian(bundle.graph)

    def tv(H):
        return float(np.sum(H * (L @ H)))

    assert tv(res.H.values) < tv(res.init.H.values)


def test_labeled_rows_pinned_every_iteration():
    bundle = generate_synthetic("sbm", seed=0, sizes=(30, 30), p_in=0.2, p_out=0.02)
    split = sample_split(bundle, SplitSpec(per_class=3, validation=10, seed=0))
    states = []
    cfg = GraphHopConfig(hops=2, max_iter=3, **FAST)
    res = run(bundle.graph, split, bundle.labels, cfg,
              callback=lambda row: states.append(row.iteration))
    assert states == [0, 1, 2, 3]
    res.H.validate(labeled=split.labeled)
    np.testing.assert_array_equal(res.H.values[split.labeled],
                                  one_hot(bundle.labels[split.labeled], 2))


def test_run_is_deterministic():
    bundle = generate_synthetic("sbm", seed=4, sizes=(30, 30), p_in=0.2, p_out=0.02)
    split = sample_split(bundle, SplitSpec(per_class=2, validation=10, seed=4))
    cfg = GraphHopConfig(hops=1, max_iter=3, seed=11, **FAST)
    a = run(bundle.graph, split, bundle.labels, cfg)
    b = run(bundle.graph, split, bundle.labels, cfg)
    np.testing.assert_array_equal(a.H.values, b.H.values)
    for col in ("val_acc", "test_acc", "frobenius_delta", "mean_entropy"):
        np.testing.assert_array_equal(a.trace.column(col), b.trace.column(col))


def test_trace_row_zero_is_initialization():
    bundle = generate_synthetic("sbm", seed=5, sizes=(20, 20), p_in=0.3, p_out=0.02)
    split = sample_split(bundle, SplitSpec(per_class=2, validation=10, seed=5))
    res = run(bundle.graph, split, bundle.labels, GraphHopConfig(hops=1, max_iter=2, **FAST))
    row0 = res.trace.rows[0]
    assert row0.iteration == 0 and np.isnan(row0.frobenius_delta)
    assert row0.test_acc == score(res.init.H.values, bundle.labels, split.test)
    deltas = res.trace.column("frobenius_delta")[1:]
    assert np.all(deltas >= 0)


def test_best_iteration_earliest_maximum():
    rows = [TraceRow(i, v, 0.0, 0.0, 0.0) for i, v in enumerate([0.5, 0.7, 0.7, 0.6])]
    assert IterationTrace(rows).best_iteration() == 1


def test_no_validation_uses_final_embedding(two_clique):
    bundle, _ = two_clique
    split = NodeSplit(10, [0, 5], [], [1, 2, 3, 4, 6, 7, 8, 9])
    res = run(bundle.graph, split, bundle.labels,
              GraphHopConfig(hops=1, max_iter=2, alpha=1.0, beta=0.0))
    assert res.best_H is res.H


def test_missing_class_warns():
    bundle = generate_synthetic("sbm", seed=0, sizes=(10, 10, 10), p_in=0.5, p_out=0.05)
    split = NodeSplit(30, [0, 1, 10], [], list(range(20, 30)))
    with pytest.warns(RuntimeWarning, match=r"classes \[2\]"):
        init = initialize(bundle.graph, split, bundle.labels, GraphHopConfig(), num_classes=3)
    assert init.missing_classes == [2]


def test_multilabel_run_keeps_valid_embedding():
    rng = np.random.default_rng(0)
    bundle = generate_synthetic("sbm", seed=0, sizes=(25, 25), p_in=0.3, p_out=0.02)
    Y = np.column_stack([bundle.labels == 0, bundle.labels == 1, rng.random(50) < 0.5])
    split = NodeSplit(50, [0, 1, 25, 26], [2, 27], list(range(3, 25)) + list(range(28, 50)))
    res = run(bundle.graph, split, Y.astype(float), GraphHopConfig(hops=1, max_iter=2, **FAST),
              multilabel=True)
    res.H.validate(labeled=split.labeled)
    np.testing.assert_array_equal(res.H.values[split.labeled], Y[split.labeled])
    assert 0.0 <= res.best_test_accuracy <= 1.0


def test_micro_f1():
    pred = np.array([[1, 0], [1, 1]])
    truth = np.array([[1, 1], [0, 1]])
    assert micro_f1(pred, truth) == pytest.approx(2 * 2 / (3 + 3))


def test_config_validation():
    with pytest.raises(ValidationError):
        GraphHopConfig(hops=0)
    with pytest.raises(ValidationError):
        GraphHopConfig(tau=1.0)
    with pytest.raises(ValidationError):
        GraphHopConfig(T=0)
    with pytest.raises(ValidationError):
        GraphHopConfig(ensemble="vote")


def test_complexity_reports_recorded():
    bundle = generate_synthetic("sbm", seed=0, sizes=(30, 30), p_in=0.2, p_out=0.02)
    split = sample_split(bundle, SplitSpec(per_class=2, validation=10, seed=0))
    res = run(bundle.graph, split, bundle.labels,
              GraphHopConfig(hops=2, max_iter=2, batch_size=16, **FAST), track_complexity=True)
    assert len(res.complexity) == 2
    rep = res.complexity[0]
    assert rep.peak_batch_values == 16 * (2 * 2 + 3 * 2)
    assert rep.aggregation_madds == 2 * rep.nnz * 2
