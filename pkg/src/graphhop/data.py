"""Dataset files, split sampling and synthetic graph generators.

On-disk layout of a dataset directory (UTF-8, LF line endings)::

    edges.txt     one "u v" pair per line, 0-based; '#' starts a comment
    features.txt  header "n d", then one line of d floats per node
    labels.txt    header "n c [multilabel]", then one class id per node,
                  or "id1;id2;..." lists in multi-label mode
    split.json    optional: {"seed", "labeled", "validation", "test"}

``features.bin`` may replace ``features.txt``: two little-endian int64
values ``n d`` followed by ``n * d`` float64 values in column-major order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, GraphError, ValidationError
from .graph import NodeSplit, build_graph

EDGES = "edges.txt"
FEATURES = "features.txt"
FEATURES_BIN = "features.bin"
LABELS = "labels.txt"
SPLIT = "split.json"


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: object
    labels: np.ndarray  # (n,) class ids, or (n, c) 0/1 matrix when multilabel
    num_classes: int
    name: str = "dataset"
    multilabel: bool = False

    def __post_init__(self):
        lab = np.asarray(self.labels)
        n = self.graph.n
        if self.multilabel:
            if lab.shape != (n, self.num_classes):
                raise ValidationError(f"multi-label matrix must be {(n, self.num_classes)}")
        else:
            if lab.shape != (n,):
                raise ValidationError(f"need one label per node, got shape {lab.shape}")
            if n and (lab.min() < 0 or lab.max() >= self.num_classes):
                raise ValidationError(f"label ids must lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.graph.n

    def class_counts(self):
        if self.multilabel:
            return self.labels.sum(axis=0).astype(np.int64)
        return np.bincount(self.labels, minlength=self.num_classes)


# -- reading -----------------------------------------------------------------

def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _read_edges(path):
    edges = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"expected 'u v', got {len(parts)} fields", path, lineno)
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DataError(f"non-integer node id in {line!r}", path, lineno) from None
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _read_header(lines, path, minimum):
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise DataError("file is empty, header expected", path) from None
    parts = line.split()
    if len(parts) < minimum:
        raise DataError(f"header needs at least {minimum} fields", path, lineno)
    try:
        return [int(p) for p in parts[:2]], parts[2:], lineno
    except ValueError:
        raise DataError(f"non-integer header {line!r}", path, lineno) from None


def _read_features_text(path):
    lines = _data_lines(path)
    (n, d), _, _ = _read_header(lines, path, 2)
    X = np.empty((n, d))
    row = 0
    for lineno, line in lines:
        parts = line.split()
        if row >= n:
            raise DataError(f"more than {n} feature rows", path, lineno)
        if len(parts) != d:
            raise DataError(f"expected {d} values, got {len(parts)}", path, lineno)
        try:
            X[row] = [float(p) for p in parts]
        except ValueError:
            raise DataError(f"non-numeric feature value in {line!r}", path, lineno) from None
        row += 1
    if row != n:
        raise DataError(f"expected {n} feature rows, found {row}", path)
    return X


def _read_features_bin(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise DataError("truncated binary feature header", path)
    n, d = (int(v) for v in np.frombuffer(raw[:16], dtype="<i8"))
    body = np.frombuffer(raw[16:], dtype="<f8")
    if body.size != n * d:
        raise DataError(f"expected {n * d} float64 values, found {body.size}", path)
    return body.reshape((n, d), order="F").copy()


def _read_labels(path):
    lines = _data_lines(path)
    (n, c), flags, _ = _read_header(lines, path, 2)
    multilabel = "multilabel" in flags
    labels = np.zeros((n, c), dtype=np.int8) if multilabel else np.zeros(n, dtype=np.int64)
    row = 0
    for lineno, line in lines:
        if row >= n:
            raise DataError(f"more than {n} label rows", path, lineno)
        if multilabel:
            ids = [p for p in line.split(";") if p]
        else:
            ids = line.split()
            if len(ids) != 1:
                raise DataError(f"expected one class id, got {len(ids)} fields", path, lineno)
        try:
            ids = [int(v) for v in ids]
        except ValueError:
            raise DataError(f"non-integer label in {line!r}", path, lineno) from None
        for v in ids:
            if not 0 <= v < c:
                raise DataError(f"label id {v} outside [0, {c})", path, lineno)
        if multilabel:
            labels[row, ids] = 1
        else:
            labels[row] = ids[0]
        row += 1
    if row != n:
        raise DataError(f"expected {n} label rows, found {row}", path)
    return labels, c, multilabel


def load_dataset(directory, name=None):
    """Read and validate a dataset directory."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError("dataset directory not found", d)
    if not (d / EDGES).exists():
        raise DataError("missing edges file", d / EDGES)
    if (d / FEATURES).exists():
        X = _read_features_text(d / FEATURES)
    elif (d / FEATURES_BIN).exists():
        X = _read_features_bin(d / FEATURES_BIN)
    else:
        raise DataError("missing features file (features.txt or features.bin)", d)
    if not (d / LABELS).exists():
        raise DataError("missing labels file", d / LABELS)
    labels, c, multilabel = _read_labels(d / LABELS)
    if len(labels) != X.shape[0]:
        raise DataError(f"labels list {len(labels)} nodes, features {X.shape[0]}", d / LABELS)
    try:
        g = build_graph(_read_edges(d / EDGES), X)
    except GraphError as exc:
        raise DataError(str(exc), d / EDGES) from None
    return DatasetBundle(g, labels, c, name or d.name, multilabel)


# -- writing -----------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def save_dataset(bundle, directory, binary_features=False):
    """Write ``bundle`` in the canonical layout; returns the written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    written = []
    with open(d / EDGES, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u} {v}\n")
    written.append(d / EDGES)
    X = g.attributes
    if binary_features:
        header = np.array(X.shape, dtype="<i8").tobytes()
        (d / FEATURES_BIN).write_bytes(header + np.asarray(X, dtype="<f8").tobytes(order="F"))
        written.append(d / FEATURES_BIN)
    else:
        with open(d / FEATURES, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{X.shape[0]} {X.shape[1]}\n")
            for row in X:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
        written.append(d / FEATURES)
    with open(d / LABELS, "w", encoding="utf-8", newline="\n") as fh:
        flag = " multilabel" if bundle.multilabel else ""
        fh.write(f"{g.n} {bundle.num_classes}{flag}\n")
        if bundle.multilabel:
            for row in bundle.labels:
                # a node without labels is written as a lone ";" so the line is not blank
                ids = ";".join(str(i) for i in np.flatnonzero(row))
                fh.write((ids or ";") + "\n")
        else:
            for v in bundle.labels:
                fh.write(f"{int(v)}\n")
    written.append(d / LABELS)
    return written


def save_split(split, path):
    doc = {"seed": split.seed, "n": split.n,
           "labeled": split.labeled.tolist(), "validation": split.validation.tolist(),
           "test": split.test.tolist()}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return Path(path)


def load_split(path, n=None):
    if not Path(path).is_file():
        raise DataError("split file not found", path)
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    for key in ("labeled", "validation", "test"):
        if key not in doc:
            raise DataError(f"split file lacks {key!r}", path)
    n = doc.get("n", n)
    if n is None:
        raise DataError("split file lacks 'n'", path)
    try:
        return NodeSplit(n, doc["labeled"], doc["validation"], doc["test"], doc.get("seed"))
    except ValidationError as exc:
        raise DataError(str(exc), path) from None


def fingerprint(directory):
    """SHA-256 over the dataset files (sorted by name)."""
    h = hashlib.sha256()
    d = Path(directory)
    for name in sorted(p.name for p in d.iterdir() if p.is_file()):
        h.update(name.encode())
        h.update(b"\0")
        h.update((d / name).read_bytes())
    return h.hexdigest()


# -- splits ------------------------------------------------------------------

@dataclass
class SplitSpec:
    """How to draw a split.

    ``mode="per_class"`` labels ``per_class`` nodes of every class;
    ``mode="fraction"`` labels ``round(fraction * n)`` nodes drawn per class
    in equal numbers (multi-class) or uniformly at random (multi-label).
    """

    mode: str = "per_class"
    per_class: int = 20
    fraction: float = 0.01
    validation: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("per_class", "fraction"):
            raise ValidationError(f"unknown split mode {self.mode!r}")
        if self.per_class < 1 and self.mode == "per_class":
            raise ValidationError("per_class must be >= 1")
        if self.mode == "fraction" and not 0 < self.fraction < 1:
            raise ValidationError("fraction must lie in (0, 1)")
        if self.validation < 0:
            raise ValidationError("validation size must be >= 0")


def sample_split(bundle, spec):
    """Draw labeled/validation/test sets; deterministic for a given seed."""
    rng = np.random.default_rng(spec.seed)
    n = bundle.n
    if bundle.multilabel:
        count = spec.per_class if spec.mode == "per_class" else max(1, round(spec.fraction * n))
        if count > n:
            raise ValidationError(f"cannot label {count} of {n} nodes")
        labeled = np.sort(rng.choice(n, size=count, replace=False))
    else:
        if spec.mode == "per_class":
            per = spec.per_class
        else:
            per = max(1, round(spec.fraction * n / bundle.num_classes))
        picks = []
        for k in range(bundle.num_classes):
            members = np.flatnonzero(bundle.labels == k)
            if len(members) < per:
                raise ValidationError(
                    f"class {k} has {len(members)} nodes, fewer than the {per} requested")
            picks.append(rng.choice(members, size=per, replace=False))
        labeled = np.sort(np.concatenate(picks)) if picks else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(n), labeled)
    if spec.validation > len(rest):
        raise ValidationError(
            f"validation size {spec.validation} exceeds the {len(rest)} unlabeled nodes")
    perm = rng.permutation(rest)
    validation = np.sort(perm[:spec.validation])
    test = np.sort(perm[spec.validation:])
    return NodeSplit(n, labeled, validation, test, spec.seed)


# -- synthetic graphs --------------------------------------------------------

def _class_attributes(rng, labels, num_classes, dim, separation, noise):
    """Gaussian attributes around random class means ``separation`` apart on average."""
    means = rng.normal(size=(num_classes, dim))
    means *= separation / math.sqrt(2 * dim)
    return means[labels] + noise * rng.normal(size=(len(labels), dim))


def generate_synthetic(kind, seed=0, **params):
    """Reproducible synthetic dataset with planted labels.

    kinds and parameters:

    ``two_clique``  sizes=(5, 5), bridge=False
    ``sbm``         sizes=(100, 100), p_in=0.5, p_out=0.01
    ``dary_tree``   d=3, depth=4 (label = root subtree, root is class 0)
    ``path``        n=10, classes=2 (contiguous label segments)

    All kinds accept ``dim`` (default 8), ``separation`` (default 4.0) and
    ``noise`` (default 1.0) for the class-mean Gaussian attributes.
    """
    rng = np.random.default_rng(seed)
    dim = int(params.pop("dim", 8))
    separation = float(params.pop("separation", 4.0))
    noise = float(params.pop("noise", 1.0))
    name = params.pop("name", kind)
    if dim < 1 or noise < 0:
        raise ValidationError("dim must be >= 1 and noise >= 0")

    if kind == "two_clique":
        sizes = tuple(params.pop("sizes", (5, 5)))
        bridge = bool(params.pop("bridge", False))
        if len(sizes) != 2 or min(sizes) < 1:
            raise ValidationError("two_clique needs two positive sizes")
        edges = []
        offset = 0
        for s in sizes:
            edges += [(offset + i, offset + j) for i in range(s) for j in range(i + 1, s)]
            offset += s
        if bridge:
            edges.append((sizes[0] - 1, sizes[0]))
        labels = np.repeat([0, 1], sizes)
        c = 2
    elif kind == "sbm":
        sizes = tuple(int(s) for s in params.pop("sizes", (100, 100)))
        p_in = float(params.pop("p_in", 0.5))
        p_out = float(params.pop("p_out", 0.01))
        if min(sizes) < 1 or not (0 <= p_in <= 1 and 0 <= p_out <= 1):
            raise ValidationError("sbm needs positive sizes and probabilities in [0, 1]")
        labels = np.repeat(np.arange(len(sizes)), sizes)
        n = len(labels)
        iu, ju = np.triu_indices(n, k=1)
        prob = np.where(labels[iu] == labels[ju], p_in, p_out)
        keep = rng.random(len(iu)) < prob
        edges = np.column_stack([iu[keep], ju[keep]])
        c = len(sizes)
    elif kind == "dary_tree":
        d = int(params.pop("d", 3))
        depth = int(params.pop("depth", 4))
        if d < 1 or depth < 0:
            raise ValidationError("dary_tree needs d >= 1 and depth >= 0")
        n = sum(d ** i for i in range(depth + 1))
        children = np.arange(1, n)
        parents = (children - 1) // d
        edges = np.column_stack([parents, children])
        labels = np.zeros(n, dtype=np.int64)
        for v in range(1, n):
            labels[v] = (v - 1) if parents[v - 1] == 0 else labels[parents[v - 1]]
        c = max(1, d) if depth > 0 else 1
    elif kind == "path":
        n = int(params.pop("n", 10))
        classes = int(params.pop("classes", 2))
        if n < 1 or not 1 <= classes <= n:
            raise ValidationError("path needs n >= 1 and 1 <= classes <= n")
        edges = [(i, i + 1) for i in range(n - 1)]
        labels = (np.arange(n) * classes) // n
        c = classes
    else:
        raise ValidationError(f"unknown synthetic kind {kind!r}")
    if params:
        raise ValidationError(f"unexpected parameters for {kind}: {sorted(params)}")

    labels = np.asarray(labels, dtype=np.int64)
    X = _class_attributes(rng, labels, c, dim, separation, noise)
    g = build_graph(edges, X)
    return DatasetBundle(g, labels, c, name)
