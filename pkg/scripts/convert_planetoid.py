"""Convert a Planetoid citation dataset (cora, citeseer, pubmed) to the text layout.

The Planetoid release ships pickles ``ind.<name>.{x,y,tx,ty,allx,ally,graph}``
and ``ind.<name>.test.index``.  This script writes ``edges.txt``,
``features.txt`` and ``labels.txt`` plus ``split.json`` holding the standard
public split (20 labels per class, 500 validation nodes, 1000 test nodes).

    python scripts/convert_planetoid.py --raw planetoid/data --name cora --out data/cora

Point ``GRAPHHOP_CORA_DIR`` at the output directory (or use the default
``data/cora``) to enable the Cora acceptance checks.

Citeseer has test indices with no feature row; those nodes are kept as
isolated zero-feature nodes labelled 0 and left out of every split set.
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from graphhop.data import DatasetBundle, save_dataset, save_split
from graphhop.graph import NodeSplit, build_graph


def _load(raw, name, part):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw, name):
    raw = Path(raw)
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p)
                                       for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_index = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_index)
    n = max(max(graph) + 1, test_sorted.max() + 1)

    missing = set()
    full = np.arange(test_sorted.min(), test_sorted.max() + 1)
    if len(full) != len(test_sorted):
        # citeseer: pad the test block so row positions match node ids
        missing = set(full) - set(test_sorted.tolist())
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        ty_ext = np.zeros((len(full), ty.shape[1]))
        tx_ext[test_sorted - full[0], :] = tx
        ty_ext[test_sorted - full[0], :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack([allx, tx]).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack([ally, ty])
    onehot[test_index, :] = onehot[test_sorted, :]
    X = np.zeros((n, features.shape[1]))
    X[:features.shape[0]] = features.toarray()
    labels = np.zeros(n, dtype=np.int64)
    labels[:onehot.shape[0]] = onehot.argmax(axis=1)

    edges = [(u, v) for u, nbrs in graph.items() for v in nbrs]
    bundle = DatasetBundle(build_graph(edges, X, n=n), labels, onehot.shape[1], name)

    drop = missing | {i for i in range(onehot.shape[0], n)}
    labeled = [i for i in range(len(y)) if i not in drop]
    validation = [i for i in range(len(y), len(y) + 500) if i not in drop]
    test = [int(i) for i in test_index if int(i) not in drop]
    split = NodeSplit(n, labeled, validation, test, seed=None)
    return bundle, split


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--raw", required=True, help="directory holding the ind.<name>.* files")
    p.add_argument("--name", required=True, choices=("cora", "citeseer", "pubmed"))
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true", help="write features.bin")
    args = p.parse_args(argv)
    bundle, split = convert(args.raw, args.name)
    save_dataset(bundle, args.out, binary_features=args.binary)
    save_split(split, Path(args.out) / "split.json")
    print(f"{args.name}: n={bundle.n} edges={bundle.graph.num_edges} "
          f"classes={bundle.num_classes} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
