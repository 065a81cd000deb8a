"""Proximity-based outliers on the 2-D layout, LOF, and flag combination.

The t-SNE branch flags points whose mean distance to their k nearest layout
neighbors exceeds a threshold (absolute, or an interpolated quantile of the
distances). Both branch flags combine into O = 2*o_tsne + o_if, a bijection
{0,1}^2 -> {0,1,2,3} preserved for reporting; selection later gates on O > 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .iforest import IForestParams, anomaly_scores, fit_iforest, threshold_by_contamination
from .rng import derive_child_seed


@dataclass(frozen=True)
class KnnOutlierParams:
    k: int = 10
    threshold: float | None = None  # absolute tau; exclusive with quantile
    quantile: float | None = 0.80

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if (self.threshold is None) == (self.quantile is None):
            raise ValueError("set exactly one of threshold (absolute) or quantile")
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.quantile is not None and not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must lie in (0,1), got {self.quantile}")


@dataclass(frozen=True)
class LofParams:
    n_neighbors: int = 20
    contamination: float = 0.20

    def __post_init__(self) -> None:
        if self.n_neighbors < 1:
            raise ValueError(f"n_neighbors must be >= 1, got {self.n_neighbors}")
        if not 0.0 < self.contamination < 1.0:
            raise ValueError(f"contamination must lie in (0,1), got {self.contamination}")


@dataclass
class CombinedOutlierVector:
    o_combined: np.ndarray  # values in {0,1,2,3}
    o_tsne: np.ndarray
    o_if: np.ndarray

    @classmethod
    def from_combined(cls, o_combined: np.ndarray) -> "CombinedOutlierVector":
        o_combined = np.asarray(o_combined, dtype=np.int64)
        return cls(o_combined=o_combined, o_tsne=o_combined // 2, o_if=o_combined % 2)


def _layout_array(L) -> np.ndarray:
    return np.asarray(getattr(L, "Y", L), dtype=np.float64)


def _check_binary(flags: np.ndarray, name: str) -> np.ndarray:
    flags = np.asarray(flags)
    if not np.isin(flags, (0, 1)).all():
        raise ValueError(f"{name} must be binary 0/1")
    return flags.astype(np.int64)


def _neighbor_order(dists_row: np.ndarray, self_index: int) -> np.ndarray:
    d = dists_row.copy()
    d[self_index] = np.inf
    # stable sort: distance ties resolve to the lower row index
    return np.argsort(d, kind="stable")


def knn_mean_distance(L, k: int) -> np.ndarray:
    """Mean Euclidean distance from each point to its k nearest other points."""
    Y = _layout_array(L)
    n = Y.shape[0]
    if n <= k:
        raise ValueError(f"need more rows than k: n={n}, k={k}")
    if not np.isfinite(Y).all():
        raise ValueError("layout must be finite")
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        d = np.sqrt(((Y - Y[i]) ** 2).sum(axis=1))
        order = _neighbor_order(d, i)
        acc = 0.0
        for j in order[:k]:  # fixed left-to-right summation
            acc += float(d[j])
        out[i] = acc / k
    return out


def tsne_outlier_flags(d_vec: np.ndarray, params: KnnOutlierParams) -> np.ndarray:
    """Flag D_i > tau; in quantile mode tau is the interpolated q-quantile of D."""
    d_vec = np.asarray(d_vec, dtype=np.float64)
    if not np.isfinite(d_vec).all():
        raise ValueError("distance vector must be finite")
    tau = params.threshold if params.threshold is not None else float(np.quantile(d_vec, params.quantile))
    return (d_vec > tau).astype(np.int64)


def combine_outliers(o_tsne: np.ndarray, o_if: np.ndarray) -> CombinedOutlierVector:
    """O = 2*o_tsne + o_if; decodable back to its components."""
    o_tsne = _check_binary(o_tsne, "o_tsne")
    o_if = _check_binary(o_if, "o_if")
    if len(o_tsne) != len(o_if):
        raise ValueError(f"flag lengths differ: {len(o_tsne)} vs {len(o_if)}")
    return CombinedOutlierVector(o_combined=2 * o_tsne + o_if, o_tsne=o_tsne, o_if=o_if)


def lof_scores(X, params: LofParams) -> np.ndarray:
    """Local outlier factor: local reachability density ratio to the neighbors'."""
    data = np.asarray(getattr(X, "data", X), dtype=np.float64)
    n, k = data.shape[0], params.n_neighbors
    if n <= k:
        raise ValueError(f"LOF needs more rows than n_neighbors: n={n}, k={k}")
    dists = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        dists[i] = np.sqrt(((data - data[i]) ** 2).sum(axis=1))
    neighbors = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        neighbors[i] = _neighbor_order(dists[i], i)[:k]
    k_dist = dists[np.arange(n), neighbors[:, -1]]

    # reach_k(p, o) = max(k_dist(o), d(p, o)) over p's neighbor set
    reach = np.maximum(k_dist[neighbors], dists[np.arange(n)[:, None], neighbors])
    lrd = 1.0 / np.maximum(reach.mean(axis=1), 1e-300)
    return lrd[neighbors].mean(axis=1) / lrd


def lof_flags(X, params: LofParams) -> np.ndarray:
    return threshold_by_contamination(lof_scores(X, params), params.contamination)


def ensemble_combine(flag_sets: list[np.ndarray], mode: str) -> np.ndarray:
    """Elementwise OR (union) or AND (intersection) of binary flag vectors."""
    if not flag_sets:
        raise ValueError("flag_sets must be non-empty")
    if mode not in ("union", "intersection"):
        raise ValueError(f"mode must be 'union' or 'intersection', got {mode!r}")
    stacked = np.stack([_check_binary(f, f"flag_sets[{i}]") for i, f in enumerate(flag_sets)])
    if stacked.ndim != 2:
        raise ValueError("flag vectors must share one length")
    return stacked.max(axis=0) if mode == "union" else stacked.min(axis=0)


def class_aware_outliers(
    X,
    class_labels: list[str],
    per_class_contamination: dict[str, float] | None = None,
    params: IForestParams = IForestParams(),
    n_threads: int = 1,
) -> np.ndarray:
    """Per-class isolation forests with per-class contamination and derived seeds.

    Classes with fewer than 2 members are skipped with a warning and stay
    unflagged. Adding or removing one class never perturbs another class's
    flags because each class runs on its own (seed, label)-derived stream.
    """
    data = np.asarray(getattr(X, "data", X), dtype=np.float64)
    labels = np.asarray(class_labels)
    if len(labels) != data.shape[0]:
        raise ValueError(f"{len(labels)} labels for {data.shape[0]} rows")
    contamination_map = per_class_contamination or {}
    flags = np.zeros(data.shape[0], dtype=np.int64)
    for label in sorted(set(labels.tolist())):
        idx = np.nonzero(labels == label)[0]
        if len(idx) < 2:
            warnings.warn(f"class {label!r} has {len(idx)} member(s); skipping outlier detection",
                          stacklevel=2)
            continue
        class_params = replace(
            params,
            contamination=contamination_map.get(label, params.contamination),
            seed=derive_child_seed(params.seed, label),
        )
        model = fit_iforest(data[idx], class_params, n_threads=n_threads)
        flags[idx] = threshold_by_contamination(
            anomaly_scores(model, data[idx]), class_params.contamination
        )
    return flags
