"""Random forest of Gini CART trees with warm start and ensemble concatenation.

Trees are immutable once grown.  Growing more trees (warm start) or
concatenating forests never touches existing trees, so every original
tree keeps voting exactly as before.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from ._backend import kernels
from .errors import EmptyTraining, IncompatibleForests, NonFiniteFeature, StumplessForest
from .fvr import N_FEATURES, FrameVector, as_matrix


@dataclass(frozen=True)
class ForestParams:
    max_depth: Optional[int] = None
    min_leaf_samples: int = 1
    features_per_split: int = math.ceil(math.sqrt(N_FEATURES))
    bootstrap: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays.  ``feature[i] == -1`` marks a leaf.

    ``counts[i]`` holds the (bootstrap-weighted) class counts of the
    training rows reaching node ``i``; columns follow ``classes``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    classes: tuple

    def __post_init__(self):
        for name, dtype in (("feature", np.int32), ("threshold", np.float64),
                            ("left", np.int32), ("right", np.int32), ("counts", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        if self.counts.shape != (len(self.feature), len(self.classes)):
            raise ValueError("counts must be n_nodes x n_classes")

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @cached_property
    def node_label(self) -> np.ndarray:
        """Class id each node would vote for; ties go to the lowest id."""
        return np.asarray(self.classes, dtype=np.int64)[np.argmax(self.counts, axis=1)]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = kernels.forest_votes(
            self.feature, self.threshold, self.left, self.right,
            np.zeros(1, dtype=np.int64), np.argmax(self.counts, axis=1), X, len(self.classes),
        )
        return np.asarray(self.classes, dtype=np.int64)[np.argmax(votes, axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "feature_index": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        n_classes = len(d["classes"])
        counts = np.array(d["counts"], dtype=np.int64).reshape(-1, n_classes)
        return cls(d["feature_index"], d["threshold"], d["left"], d["right"],
                   counts, tuple(d["classes"]))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    classes: tuple
    feature_count: int = N_FEATURES
    seed: int = 0
    params: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "classes", tuple(sorted(int(c) for c in self.classes)))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def __len__(self):
        return len(self.trees)

    @cached_property
    def _flat(self):
        pos = {c: i for i, c in enumerate(self.classes)}
        feats, thrs, lefts, rights, leaf_cls, roots = [], [], [], [], [], []
        offset = 0
        for t in self.trees:
            roots.append(offset)
            feats.append(t.feature)
            thrs.append(t.threshold)
            is_leaf = t.feature < 0
            lefts.append(np.where(is_leaf, -1, t.left + offset))
            rights.append(np.where(is_leaf, -1, t.right + offset))
            leaf_cls.append(np.array([pos[c] for c in t.node_label.tolist()], dtype=np.int64))
            offset += t.n_nodes
        if not self.trees:
            z = np.zeros(0)
            return (z.astype(np.int32), z, z.astype(np.int32), z.astype(np.int32),
                    z.astype(np.int64), z.astype(np.int64))
        return (np.concatenate(feats).astype(np.int32), np.concatenate(thrs),
                np.concatenate(lefts).astype(np.int32), np.concatenate(rights).astype(np.int32),
                np.array(roots, dtype=np.int64), np.concatenate(leaf_cls))

    def votes(self, X) -> np.ndarray:
        """(n_rows, n_classes) vote counts; columns follow ``classes``."""
        X = _check_features(X, self.feature_count)
        fe, th, le, ri, roots, lc = self._flat
        return kernels.forest_votes(fe, th, le, ri, roots, lc, X, self.n_classes)

    def predict(self, X) -> np.ndarray:
        votes = self.votes(X)
        return np.asarray(self.classes, dtype=np.int64)[np.argmax(votes, axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "feature_count": self.feature_count,
            "seed": self.seed,
            "params": self.params.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            classes=tuple(d["classes"]),
            feature_count=int(d["feature_count"]),
            seed=int(d["seed"]),
            params=ForestParams.from_dict(d["params"]),
        )


TrainingData = Union[Sequence[FrameVector], tuple]


def _check_features(X, feature_count: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != feature_count:
        raise ValueError(f"expected {feature_count} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature vectors must be finite")
    return X


def _training_arrays(train: TrainingData, feature_count: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(train, tuple) and len(train) == 2 and isinstance(train[0], np.ndarray):
        X, y = train
    else:
        X, y = as_matrix(list(train))
    if len(X) == 0:
        raise EmptyTraining("no training vectors")
    X = _check_features(X, feature_count)
    return np.ascontiguousarray(X), np.asarray(y, dtype=np.int64)


def _grow(X, y, n_trees, params, seed, start_index, n_jobs=1) -> list[Tree]:
    classes = tuple(np.unique(y).tolist())
    y_pos = np.searchsorted(np.asarray(classes), y).astype(np.intp)
    n = len(y)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    mtry = max(1, min(params.features_per_split, X.shape[1]))

    def grow_one(i):
        rng = np.random.default_rng([seed, i])
        sample = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
        kernel_seed = int(rng.integers(0, 2**63 - 1))
        arrays = kernels.build_tree(X, y_pos, sample, len(classes), mtry, max_depth,
                                    params.min_leaf_samples, kernel_seed)
        return Tree(*arrays, classes=classes)

    indices = range(start_index, start_index + n_trees)
    if n_jobs > 1 and n_trees > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(grow_one, indices))
    return [grow_one(i) for i in indices]


def train_forest(train: TrainingData, n_trees: int, params: Optional[ForestParams] = None,
                 seed: int = 0, n_jobs: int = 1, feature_count: int = N_FEATURES) -> Forest:
    """Grow ``n_trees`` trees, each on its own bootstrap resample.

    Tree ``i`` depends only on ``(seed, i)`` and the data, so a forest grown
    in two warm-start steps equals one grown in a single call.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    params = params or ForestParams()
    X, y = _training_arrays(train, feature_count)
    trees = _grow(X, y, n_trees, params, seed, 0, n_jobs)
    return Forest(tuple(trees), tuple(np.unique(y).tolist()), feature_count, seed, params)


def warm_start_extend(forest: Forest, train: TrainingData, extra_trees: int,
                      n_jobs: int = 1) -> Forest:
    if extra_trees < 0:
        raise ValueError("extra_trees must be >= 0")
    X, y = _training_arrays(train, forest.feature_count)
    if extra_trees == 0:
        return forest
    new = _grow(X, y, extra_trees, forest.params, forest.seed, len(forest.trees), n_jobs)
    classes = set(forest.classes) | set(np.unique(y).tolist())
    return Forest(forest.trees + tuple(new), tuple(classes), forest.feature_count,
                  forest.seed, forest.params)


def combine(forests: Sequence[Forest]) -> Forest:
    """Concatenate tree sequences; the vote of the result is the sum of votes."""
    forests = list(forests)
    if not forests:
        raise IncompatibleForests("nothing to combine")
    if len(forests) == 1:
        return forests[0]
    fc = {f.feature_count for f in forests}
    if len(fc) != 1:
        raise IncompatibleForests(f"feature counts differ: {sorted(fc)}")
    classes = set()
    trees = []
    for f in forests:
        classes.update(f.classes)
        trees.extend(f.trees)
    head = forests[0]
    return Forest(tuple(trees), tuple(classes), head.feature_count, head.seed, head.params)


def predict(forest: Forest, vector) -> tuple[int, dict]:
    """Majority vote for one vector; ties go to the lowest class id."""
    x = vector.features if isinstance(vector, FrameVector) else np.asarray(vector, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single vector")
    v = forest.votes(x[None, :])[0]
    label = forest.classes[int(np.argmax(v))]
    return label, {c: int(n) for c, n in zip(forest.classes, v)}


def _gini(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(axis=1).astype(np.float64)
    p = counts / np.where(tot > 0, tot, 1)[:, None]
    return 1.0 - (p * p).sum(axis=1)


def tree_importance(tree: Tree, feature_count: int = N_FEATURES) -> np.ndarray:
    """Unnormalised weighted Gini decrease per feature for one tree."""
    imp = np.zeros(feature_count)
    internal = np.flatnonzero(tree.feature >= 0)
    if len(internal) == 0:
        return imp
    n = tree.counts.sum(axis=1).astype(np.float64)
    g = _gini(tree.counts)
    lch = tree.left[internal]
    rch = tree.right[internal]
    dec = n[internal] * g[internal] - n[lch] * g[lch] - n[rch] * g[rch]
    np.add.at(imp, tree.feature[internal], dec)
    return imp / n[0]


def feature_importance(forest: Forest) -> np.ndarray:
    """Mean decrease in Gini impurity per feature, normalised to sum to 1."""
    per_tree = []
    for t in forest.trees:
        if t.n_nodes > 1:
            imp = tree_importance(t, forest.feature_count)
            s = imp.sum()
            per_tree.append(imp / s if s > 0 else imp)
    if not per_tree:
        raise StumplessForest("no tree has an internal node")
    mean = np.mean(per_tree, axis=0)
    total = mean.sum()
    if total <= 0:
        raise StumplessForest("splits carry no impurity decrease")
    return mean / total
