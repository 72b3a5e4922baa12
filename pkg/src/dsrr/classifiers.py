"""Seed-deterministic kNN, CART and random-forest classifiers.

All three learners store classes in lexicographic order and break every
tie towards the lower class index, i.e. the lexicographically smaller label.
Models serialize to plain JSON-compatible dicts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InputError, ParameterError

__all__ = [
    "KnnModel",
    "Tree",
    "ForestModel",
    "knn_fit",
    "knn_predict",
    "tree_fit",
    "tree_predict",
    "forest_fit",
    "forest_predict",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "dsrr-model"
MODEL_VERSION = 1
_TIE_RTOL = 1e-12


def _prepare(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError("feature matrix must be 2-D")
    if not np.all(np.isfinite(X)):
        raise InputError("feature matrix contains NaN or infinite values")
    if y is None:
        return X
    y = np.asarray(y)
    if y.shape[0] != X.shape[0]:
        raise InputError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    return X, y


def _encode(y) -> tuple[np.ndarray, np.ndarray]:
    classes, codes = np.unique(y, return_inverse=True)
    return classes, codes.astype(np.intp)


# --------------------------------------------------------------------------
# k nearest neighbours
# --------------------------------------------------------------------------

@dataclass
class KnnModel:
    X: np.ndarray  # raw training rows
    y: np.ndarray  # class codes
    classes: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    k: int = 5

    def predict(self, rows) -> np.ndarray:
        return knn_predict(self, rows)


def knn_fit(X, y, k: int = 5) -> KnnModel:
    """Store the training rows with per-feature mean and scale; constant features get scale 1."""
    X, y = _prepare(X, y)
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if k > X.shape[0]:
        raise ParameterError(f"k={k} exceeds training size {X.shape[0]}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    classes, codes = _encode(y)
    return KnnModel(X=X, y=codes, classes=classes, mean=mean, scale=scale, k=int(k))


def knn_predict(model: KnnModel, rows) -> np.ndarray:
    """Majority vote of the k nearest rows (Euclidean, standardized).

    Equal distances go to the lower training index; equal votes to the
    lexicographically smaller label.
    """
    Q = _prepare(rows)
    n_train, n_feat = model.X.shape
    out = np.empty(Q.shape[0], dtype=np.intp)
    chunk = max(1, int(4e6 // max(1, n_train * n_feat)))
    n_classes = len(model.classes)
    for start in range(0, Q.shape[0], chunk):
        q = Q[start : start + chunk]
        # raw differences scaled afterwards: equal offsets give bit-equal distances
        d2 = (((q[:, None, :] - model.X[None, :, :]) / model.scale) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : model.k]
        votes = np.zeros((q.shape[0], n_classes), dtype=np.intp)
        np.add.at(votes, (np.repeat(np.arange(q.shape[0]), model.k), model.y[nearest].ravel()), 1)
        out[start : start + chunk] = votes.argmax(axis=1)
    return model.classes[out]


# --------------------------------------------------------------------------
# CART
# --------------------------------------------------------------------------

@dataclass
class Tree:
    """Flat array form of a binary tree; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training class counts
    classes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        return self.counts[self.apply(X)].argmax(axis=1)

    def predict(self, rows) -> np.ndarray:
        return self.classes[self.predict_codes(_prepare(rows))]


def _best_split(X, y, idx, features, n_classes, min_leaf):
    """Best (feature, threshold) by weighted Gini over ``features`` (ascending), or None.

    Minimizing weighted Gini equals maximizing sum(c_L^2)/n_L + sum(c_R^2)/n_R.
    """
    m = idx.size
    yi = y[idx]
    onehot = np.zeros((m, n_classes))
    best = []
    for f in features:
        xv = X[idx, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        cut = np.flatnonzero(xs[1:] != xs[:-1])  # split after position cut
        if cut.size == 0:
            continue
        n_left = cut + 1
        ok = (n_left >= min_leaf) & (m - n_left >= min_leaf)
        if not ok.any():
            continue
        cut, n_left = cut[ok], n_left[ok]
        onehot[:] = 0
        onehot[np.arange(m), yi[order]] = 1
        cum = np.cumsum(onehot, axis=0)
        cl = cum[cut]
        cr = cum[-1] - cl
        score = (cl * cl).sum(axis=1) / n_left + (cr * cr).sum(axis=1) / (m - n_left)
        best.append((float(score.max()), f, score, cut, xs))
    if not best:
        return None
    top = max(b[0] for b in best)
    floor = top - _TIE_RTOL * max(1.0, abs(top))
    for score_max, f, score, cut, xs in best:
        if score_max >= floor:
            j = int(np.flatnonzero(score >= floor)[0])
            lo, hi = xs[cut[j]], xs[cut[j] + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            return f, thr


def _grow(X, y, idx, n_classes, classes, max_depth, min_leaf, feature_sampler=None) -> Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[rows], minlength=n_classes))
        return len(feature) - 1

    all_features = np.arange(X.shape[1])
    stack = [(new_node(idx), idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        c = counts[node]
        if np.count_nonzero(c) <= 1 or (max_depth is not None and depth >= max_depth) or rows.size < 2 * min_leaf:
            continue
        split = None
        if feature_sampler is None:
            split = _best_split(X, y, rows, all_features, n_classes, min_leaf)
        else:
            first, rest = feature_sampler()
            split = _best_split(X, y, rows, first, n_classes, min_leaf)
            if split is None and rest.size:
                split = _best_split(X, y, rows, rest, n_classes, min_leaf)
        if split is None:
            continue
        f, thr = split
        go_left = X[rows, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        l_rows, r_rows = rows[go_left], rows[~go_left]
        left[node] = new_node(l_rows)
        right[node] = new_node(r_rows)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], r_rows, depth + 1))
        stack.append((left[node], l_rows, depth + 1))

    return Tree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        counts=np.array(counts, dtype=np.int64).reshape(len(feature), n_classes),
        classes=classes,
    )


def _check_tree_params(max_depth, min_leaf):
    if max_depth is not None and (int(max_depth) != max_depth or max_depth < 0):
        raise ParameterError(f"max_depth must be a non-negative integer or None, got {max_depth!r}")
    if int(min_leaf) != min_leaf or min_leaf < 1:
        raise ParameterError(f"min_leaf must be a positive integer, got {min_leaf!r}")


def tree_fit(X, y, max_depth: Optional[int] = None, min_leaf: int = 1) -> Tree:
    """Grow a CART tree by greedy weighted-Gini minimization.

    Thresholds are midpoints between consecutive distinct values. Equal
    impurities go to the lower feature index, then the lower threshold.
    Growth stops at a pure node, at ``max_depth``, or when a node cannot be
    split into two children of at least ``min_leaf`` rows.
    """
    X, y = _prepare(X, y)
    if X.shape[0] == 0:
        raise ParameterError("cannot fit a tree on an empty training set")
    _check_tree_params(max_depth, min_leaf)
    classes, codes = _encode(y)
    return _grow(X, codes, np.arange(X.shape[0]), len(classes), classes, max_depth, int(min_leaf))


def tree_predict(tree: Tree, rows) -> np.ndarray:
    return tree.predict(rows)


# --------------------------------------------------------------------------
# Random forest
# --------------------------------------------------------------------------

@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    master_seed: int
    max_features: int
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_leaf: int = 1
    tree_seeds: list[list[int]] = field(default_factory=list)

    def predict(self, rows) -> np.ndarray:
        return forest_predict(self, rows)


def _resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if int(max_features) != max_features or not 1 <= max_features:
        raise ParameterError(f"max_features must be 'sqrt', None or a positive integer, got {max_features!r}")
    return min(int(max_features), n_features)


def _tree_rngs(master_seed: int, n_trees: int):
    # counter-based generator per tree; each stream depends only on (master_seed, tree index)
    children = np.random.SeedSequence(master_seed).spawn(n_trees)
    return [np.random.Generator(np.random.Philox(c)) for c in children], [list(c.spawn_key) for c in children]


def forest_fit(
    X,
    y,
    n_trees: int = 100,
    max_depth: Optional[int] = None,
    master_seed: int = 0,
    *,
    min_leaf: int = 1,
    max_features: Union[str, int, None] = "sqrt",
    bootstrap: bool = True,
) -> ForestModel:
    """Bagged CART ensemble with per-split random feature subsets.

    Tree ``i`` draws its bootstrap resample and split features from its own
    Philox stream spawned from ``master_seed``, so the model is reproducible
    bit for bit. If none of the sampled features admits a split, the
    remaining features are tried before a node is made a leaf.
    """
    X, y = _prepare(X, y)
    if int(n_trees) != n_trees or n_trees < 1:
        raise ParameterError(f"n_trees must be a positive integer, got {n_trees!r}")
    if X.shape[0] == 0:
        raise ParameterError("cannot fit a forest on an empty training set")
    _check_tree_params(max_depth, min_leaf)
    classes, codes = _encode(y)
    n, n_features = X.shape
    m = _resolve_max_features(max_features, n_features)
    rngs, keys = _tree_rngs(int(master_seed), int(n_trees))

    trees = []
    for rng in rngs:
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)

        def sampler(rng=rng):
            perm = rng.permutation(n_features)
            return np.sort(perm[:m]), np.sort(perm[m:])

        trees.append(
            _grow(X, codes, idx, len(classes), classes, max_depth, int(min_leaf), None if m == n_features else sampler)
        )
    return ForestModel(
        trees=trees,
        classes=classes,
        master_seed=int(master_seed),
        max_features=m,
        bootstrap=bool(bootstrap),
        max_depth=max_depth,
        min_leaf=int(min_leaf),
        tree_seeds=keys,
    )


def forest_predict(model: ForestModel, rows) -> np.ndarray:
    """Hard majority vote across trees; ties go to the lexicographically smaller label."""
    Q = _prepare(rows)
    votes = np.zeros((Q.shape[0], len(model.classes)), dtype=np.intp)
    for tree in model.trees:
        votes[np.arange(Q.shape[0]), tree.predict_codes(Q)] += 1
    return model.classes[votes.argmax(axis=1)]


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "counts": tree.counts.tolist(),
    }


def _tree_from_dict(d: dict, classes: np.ndarray) -> Tree:
    return Tree(
        feature=np.array(d["feature"], dtype=np.intp),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["left"], dtype=np.intp),
        right=np.array(d["right"], dtype=np.intp),
        counts=np.array(d["counts"], dtype=np.int64).reshape(len(d["feature"]), len(classes)),
        classes=classes,
    )


def model_to_dict(model, feature_names: Optional[Sequence[str]] = None) -> dict:
    """Versioned JSON-compatible representation of a fitted model."""
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    if isinstance(model, KnnModel):
        doc.update(
            kind="knn",
            classes=model.classes.tolist(),
            k=model.k,
            mean=model.mean.tolist(),
            scale=model.scale.tolist(),
            X=model.X.tolist(),
            y=model.y.tolist(),
        )
    elif isinstance(model, Tree):
        doc.update(kind="tree", classes=model.classes.tolist(), tree=_tree_to_dict(model))
    elif isinstance(model, ForestModel):
        doc.update(
            kind="forest",
            classes=model.classes.tolist(),
            master_seed=model.master_seed,
            max_features=model.max_features,
            bootstrap=model.bootstrap,
            max_depth=model.max_depth,
            min_leaf=model.min_leaf,
            tree_seeds=model.tree_seeds,
            trees=[_tree_to_dict(t) for t in model.trees],
        )
    else:
        raise TypeError(f"not a model: {type(model).__name__}")
    doc["feature_names"] = list(feature_names) if feature_names is not None else None
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise InputError("not a dsrr model document")
    if doc.get("version") != MODEL_VERSION:
        raise InputError(f"unsupported model version {doc.get('version')!r}")
    classes = np.array(doc["classes"])
    kind = doc["kind"]
    if kind == "knn":
        return KnnModel(
            X=np.array(doc["X"], dtype=float),
            y=np.array(doc["y"], dtype=np.intp),
            classes=classes,
            mean=np.array(doc["mean"], dtype=float),
            scale=np.array(doc["scale"], dtype=float),
            k=int(doc["k"]),
        )
    if kind == "tree":
        return _tree_from_dict(doc["tree"], classes)
    if kind == "forest":
        return ForestModel(
            trees=[_tree_from_dict(t, classes) for t in doc["trees"]],
            classes=classes,
            master_seed=int(doc["master_seed"]),
            max_features=int(doc["max_features"]),
            bootstrap=bool(doc["bootstrap"]),
            max_depth=doc["max_depth"],
            min_leaf=int(doc["min_leaf"]),
            tree_seeds=doc["tree_seeds"],
        )
    raise InputError(f"unknown model kind {kind!r}")


def save_model(model, path: Union[str, Path], feature_names: Optional[Sequence[str]] = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, feature_names)))


def load_model(path: Union[str, Path]):
    """Returns ``(model, feature_names)``."""
    doc = json.loads(Path(path).read_text())
    return model_from_dict(doc), doc.get("feature_names")
