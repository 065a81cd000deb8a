"""Isolation forest grown from scratch, with contamination-thresholded flags.

Anomalies isolate in short paths under recursive random partitioning; the
score normalizes the expected path length by the average unsuccessful-search
depth c(psi) of a binary search tree. Every random draw comes from a per-tree
generator derived from (seed, tree_index), so fits are reproducible and
independent of how many worker threads build the trees.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_rng

EULER_GAMMA = 0.5772156649


def c_factor(n: int) -> float:
    """Average unsuccessful-search path length in a binary tree of n points."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IForestParams:
    n_trees: int = 100
    subsample_size: int = 256
    contamination: float = 0.20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.subsample_size < 2:
            raise ValueError(f"subsample_size must be >= 2, got {self.subsample_size}")
        if not 0.0 < self.contamination < 1.0:
            raise ValueError(f"contamination must lie in (0,1), got {self.contamination}")


@dataclass
class IsolationTree:
    """Flat node arrays; split_dim == -1 marks a leaf holding leaf_size points."""

    split_dim: np.ndarray
    split_value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_size: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.split_dim)


@dataclass
class IsolationForestModel:
    trees: list[IsolationTree]
    psi: int
    params: IForestParams
    dim: int
    _c_psi: float = field(init=False)

    def __post_init__(self) -> None:
        self._c_psi = c_factor(self.psi)


def _as_array(X) -> np.ndarray:
    data = getattr(X, "data", X)
    return np.asarray(data, dtype=np.float64)


class _TreeBuilder:
    def __init__(self, max_depth: int):
        self.max_depth = max_depth
        self.split_dim: list[int] = []
        self.split_value: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_size: list[int] = []

    def _new_node(self) -> int:
        self.split_dim.append(-1)
        self.split_value.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_size.append(0)
        return len(self.split_dim) - 1

    def build(self, data: np.ndarray, rng: np.random.Generator) -> IsolationTree:
        self._grow(data, 0, rng)
        return IsolationTree(
            split_dim=np.asarray(self.split_dim, dtype=np.int64),
            split_value=np.asarray(self.split_value, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            leaf_size=np.asarray(self.leaf_size, dtype=np.int64),
        )

    def _grow(self, data: np.ndarray, depth: int, rng: np.random.Generator) -> int:
        node = self._new_node()
        if depth >= self.max_depth or len(data) <= 1:
            self.leaf_size[node] = len(data)
            return node
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        candidates = np.nonzero(lo < hi)[0]
        if candidates.size == 0:  # all points identical: no split exists
            self.leaf_size[node] = len(data)
            return node
        dim = int(candidates[rng.integers(candidates.size)])
        v = float(rng.uniform(lo[dim], hi[dim]))
        if not lo[dim] < v < hi[dim]:  # boundary draw: fall back to the midpoint
            v = float(lo[dim] + 0.5 * (hi[dim] - lo[dim]))
        mask = data[:, dim] < v
        self.split_dim[node] = dim
        self.split_value[node] = v
        self.left[node] = self._grow(data[mask], depth + 1, rng)
        self.right[node] = self._grow(data[~mask], depth + 1, rng)
        return node


def fit_iforest(X, params: IForestParams, n_threads: int = 1) -> IsolationForestModel:
    """Grow n_trees isolation trees on seeded psi-subsamples of X."""
    data = _as_array(X)
    n = data.shape[0]
    if n < 2:
        raise ValueError(f"isolation forest needs at least 2 rows, got {n}")
    if not np.isfinite(data).all():
        raise ValueError("isolation forest input must be finite")
    psi = min(params.subsample_size, n)
    max_depth = math.ceil(math.log2(psi))

    def build_one(tree_index: int) -> IsolationTree:
        rng = derive_rng(params.seed, tree_index)
        indices = rng.choice(n, size=psi, replace=False)
        return _TreeBuilder(max_depth).build(data[indices], rng)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(build_one, range(params.n_trees)))
    else:
        trees = [build_one(t) for t in range(params.n_trees)]
    return IsolationForestModel(trees=trees, psi=psi, params=params, dim=data.shape[1])


def path_length(tree: IsolationTree, x: np.ndarray) -> float:
    """Edges from root to the reached leaf, plus c(leaf size) at truncation."""
    x = np.asarray(x, dtype=np.float64)
    node = 0
    edges = 0
    while tree.split_dim[node] >= 0:
        if x[tree.split_dim[node]] < tree.split_value[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
        edges += 1
    return edges + c_factor(int(tree.leaf_size[node]))


def _tree_path_lengths(tree: IsolationTree, data: np.ndarray) -> np.ndarray:
    """Vectorized path_length over all rows of data."""
    n = data.shape[0]
    out = np.empty(n, dtype=np.float64)
    stack = [(0, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        dim = tree.split_dim[node]
        if dim < 0:
            out[idx] = depth + c_factor(int(tree.leaf_size[node]))
            continue
        mask = data[idx, dim] < tree.split_value[node]
        stack.append((int(tree.left[node]), idx[mask], depth + 1))
        stack.append((int(tree.right[node]), idx[~mask], depth + 1))
    return out


def anomaly_scores(model: IsolationForestModel, X) -> np.ndarray:
    """s(x) = 2^(-E[h(x)] / c(psi)); scores lie in (0,1) for psi >= 2."""
    data = _as_array(X)
    if data.ndim != 2 or data.shape[1] != model.dim:
        raise ValueError(f"expected (n, {model.dim}) matrix, got shape {data.shape}")
    if data.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    mean_h = np.zeros(data.shape[0], dtype=np.float64)
    for tree in model.trees:
        mean_h += _tree_path_lengths(tree, data)
    mean_h /= len(model.trees)
    return np.power(2.0, -mean_h / model._c_psi)


def threshold_by_contamination(scores: np.ndarray, contamination: float) -> np.ndarray:
    """Flag exactly floor(contamination*N) highest scores; ties at the cut go to lower row indices."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    if not 0.0 < contamination < 1.0:
        raise ValueError(f"contamination must lie in (0,1), got {contamination}")
    n = len(scores)
    m = int(math.floor(contamination * n))
    flags = np.zeros(n, dtype=np.int64)
    if m > 0:
        # stable sort on descending score keeps ascending row order inside ties
        order = np.argsort(-scores, kind="stable")
        flags[order[:m]] = 1
    return flags


def fit_then_score_split(train_X, apply_X, params: IForestParams, n_threads: int = 1) -> np.ndarray:
    """Fit on train_X only; contamination-threshold the apply_X scores."""
    apply_data = _as_array(apply_X)
    if apply_data.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    model = fit_iforest(train_X, params, n_threads=n_threads)
    if apply_data.shape[1] != model.dim:
        raise ValueError(
            f"train dim {model.dim} does not match apply dim {apply_data.shape[1]}"
        )
    return threshold_by_contamination(anomaly_scores(model, apply_data), params.contamination)
