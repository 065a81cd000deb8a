"""Exact t-SNE: Gaussian affinities tuned by bisection, Student-t layout.

N^2 memory and time by design; the mined corpora this package targets stay in
the thousands of rows. Affinities use squared Euclidean distances; per-row
bandwidths are bisected until the Shannon entropy H (in bits) of the row
matches log2(perplexity). Optimization is plain momentum gradient descent with
the usual 250-iteration early-exaggeration phase.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import derive_rng

OUT_DIMS = 2
EXPLORATION_ITERS = 250  # early exaggeration + low momentum during this prefix
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
INIT_SIGMA = 1e-4
_JITTER_KEY = "tsne-duplicate-jitter"


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    out_dims: int = OUT_DIMS
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    n_iters: int = 1000
    entropy_tol: float = 1e-5
    max_bisect_iters: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.out_dims != OUT_DIMS:
            raise ValueError(f"out_dims is fixed at {OUT_DIMS}, got {self.out_dims}")
        for name in ("perplexity", "learning_rate", "early_exaggeration", "entropy_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_iters < 1 or self.max_bisect_iters < 1:
            raise ValueError("n_iters and max_bisect_iters must be >= 1")


@dataclass
class AffinityMatrix:
    """Joint symmetric probabilities: symmetric, zero diagonal, unit sum."""

    P: np.ndarray

    def validate(self, atol: float = 1e-9) -> None:
        P = self.P
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"affinity matrix must be square, got {P.shape}")
        if not np.allclose(P, P.T, atol=atol):
            raise ValueError("affinity matrix must be symmetric")
        if np.abs(np.diagonal(P)).max(initial=0.0) > 0:
            raise ValueError("affinity matrix diagonal must be zero")
        if P.min(initial=0.0) < 0:
            raise ValueError("affinity entries must be >= 0")
        if abs(float(P.sum()) - 1.0) > atol:
            raise ValueError(f"affinity entries must sum to 1, got {P.sum()}")


@dataclass
class Layout2D:
    Y: np.ndarray  # (N, 2)
    row_ids: list[str]

    def __post_init__(self) -> None:
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.Y.ndim != 2 or self.Y.shape[1] != OUT_DIMS:
            raise ValueError(f"layout must be (N, {OUT_DIMS}), got {self.Y.shape}")
        if len(self.row_ids) != self.Y.shape[0]:
            raise ValueError("row_ids must align with layout rows")
        if not np.isfinite(self.Y).all():
            raise ValueError("layout entries must be finite")


def _as_array(X) -> np.ndarray:
    return np.asarray(getattr(X, "data", X), dtype=np.float64)


def _row_ids_of(X, n: int) -> list[str]:
    ids = getattr(X, "row_ids", None)
    return list(ids) if ids is not None else [str(i) for i in range(n)]


def effective_perplexity(perplexity: float, n: int) -> float:
    """Clamp to N-2: a target of N-1 is the uniform-row entropy supremum and
    is reached only as the bandwidth diverges, so it cannot be bisected to."""
    return max(1.0, min(float(perplexity), float(n - 2)))


def _deduplicate(X: np.ndarray) -> np.ndarray:
    """Deterministic jitter for duplicate rows, keyed by row index."""
    _, first_index = np.unique(X, axis=0, return_index=True)
    if len(first_index) == len(X):
        return X
    diameter = 0.0
    for i in range(len(X)):
        d2 = ((X - X[i]) ** 2).sum(axis=1)
        diameter = max(diameter, math.sqrt(float(d2.max())))
    warnings.warn(
        f"{len(X) - len(first_index)} duplicate rows: applying jitter of magnitude "
        f"{1e-10 * diameter:g} before affinity computation",
        stacklevel=3,
    )
    X = X.copy()
    keep = set(int(i) for i in first_index)
    seen: set[bytes] = set()
    for i in range(len(X)):
        key = X[i].tobytes()
        if i in keep and key not in seen:
            seen.add(key)
            continue
        X[i] = X[i] + derive_rng(0, _JITTER_KEY, i).standard_normal(X.shape[1]) * (1e-10 * diameter)
    return X


def conditional_affinities(
    X,
    perplexity: float,
    tol: float = 1e-5,
    max_iters: int = 50,
) -> np.ndarray:
    """Row-stochastic Gaussian affinities with per-row bandwidth bisection.

    Each row's entropy (bits) is driven to log2(effective perplexity) within
    tol, or a warning is emitted for the rows where max_iters ran out.
    """
    data = _as_array(X)
    n = data.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 rows, got {n}")
    target_bits = math.log2(effective_perplexity(perplexity, n))
    data = _deduplicate(data)

    P = np.zeros((n, n), dtype=np.float64)
    unconverged: list[int] = []
    log2e = 1.0 / math.log(2.0)
    for i in range(n):
        d2 = ((data - data[i]) ** 2).sum(axis=1)
        d2[i] = np.inf
        shift = d2.min()
        if not np.isfinite(shift):
            shift = 0.0
        beta, beta_min, beta_max = 1.0, 0.0, np.inf
        row = None
        for _ in range(max_iters):
            w = np.exp(-(d2 - shift) * beta)
            w[i] = 0.0
            s = w.sum()
            row = w / s
            pos = row > 0
            # H = log(sum w) + beta * E[d2 - shift], converted to bits
            h_bits = (math.log(s) + beta * float((row[pos] * (d2[pos] - shift)).sum())) * log2e
            diff = h_bits - target_bits
            if abs(diff) <= tol:
                break
            if diff > 0:  # entropy too high: sharpen
                beta_min = beta
                beta = beta * 2.0 if not np.isfinite(beta_max) else 0.5 * (beta + beta_max)
            else:
                beta_max = beta
                beta = 0.5 * (beta + beta_min) if beta_min > 0 else beta * 0.5
        else:
            unconverged.append(i)
        P[i] = row
    if unconverged:
        warnings.warn(
            f"entropy bisection did not converge for {len(unconverged)} rows "
            f"(first: {unconverged[:5]})",
            stacklevel=2,
        )
    return P


def symmetrize(P_cond: np.ndarray) -> AffinityMatrix:
    """P_ij = (P_j|i + P_i|j) / (2N); entries sum to one."""
    P_cond = np.asarray(P_cond, dtype=np.float64)
    n = P_cond.shape[0]
    P = (P_cond + P_cond.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    out = AffinityMatrix(P)
    out.validate()
    return out


def _P_of(P) -> np.ndarray:
    return np.asarray(getattr(P, "P", P), dtype=np.float64)


def _pairwise_sq_dists(Y: np.ndarray) -> np.ndarray:
    sq = (Y**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _student_t_weights(Y: np.ndarray) -> np.ndarray:
    w = 1.0 / (1.0 + _pairwise_sq_dists(Y))
    np.fill_diagonal(w, 0.0)
    return w


def kl_divergence(P, Y) -> float:
    """KL(P || Q) with Student-t Q from the layout; 0*log(0) taken as 0."""
    P = _P_of(P)
    Y = np.asarray(getattr(Y, "Y", Y), dtype=np.float64)
    if P.shape[0] != Y.shape[0]:
        raise ValueError(f"P has {P.shape[0]} rows but Y has {Y.shape[0]}")
    w = _student_t_weights(Y)
    Q = w / w.sum()
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


def tsne_gradient(P, Y) -> np.ndarray:
    """Gradient of kl_divergence at Y: 4 * sum_j (P-Q)_ij w_ij (y_i - y_j)."""
    P = _P_of(P)
    Y = np.asarray(getattr(Y, "Y", Y), dtype=np.float64)
    w = _student_t_weights(Y)
    Q = w / w.sum()
    M = (P - Q) * w
    return 4.0 * (M.sum(axis=1)[:, None] * Y - M @ Y)


def initial_layout(n: int, seed: int) -> np.ndarray:
    """Seeded Gaussian starting layout (sigma = 1e-4) used by run_tsne."""
    return derive_rng(seed, "tsne-init").standard_normal((n, OUT_DIMS)) * INIT_SIGMA


def _gradient_into(P: np.ndarray, Y: np.ndarray, buf: np.ndarray, mix: np.ndarray) -> np.ndarray:
    """tsne_gradient with preallocated N x N buffers; the N^2 temporaries
    dominate the descent runtime on corpora in the thousands of rows."""
    np.dot(Y, Y.T, out=buf)
    sq = np.einsum("ij,ij->i", Y, Y)
    buf *= -2.0
    buf += sq[:, None]
    buf += sq[None, :]
    np.maximum(buf, 0.0, out=buf)
    buf += 1.0
    np.reciprocal(buf, out=buf)  # Student-t weights w
    np.fill_diagonal(buf, 0.0)
    total = buf.sum()
    np.multiply(P, buf, out=mix)  # P * w
    buf *= buf  # w^2
    buf /= total
    mix -= buf  # (P - Q) * w
    grad = mix.sum(axis=1)[:, None] * Y - mix @ Y
    grad *= 4.0
    return grad


def run_tsne(X, config: TsneConfig) -> Layout2D:
    """Momentum gradient descent from a seeded Gaussian start; deterministic."""
    data = _as_array(X)
    n = data.shape[0]
    if n < 3:
        raise ValueError(f"t-SNE needs at least 3 rows, got {n}")
    row_ids = _row_ids_of(X, n)

    P_cond = conditional_affinities(data, config.perplexity, config.entropy_tol, config.max_bisect_iters)
    P = symmetrize(P_cond).P

    Y = initial_layout(n, config.seed)
    velocity = np.zeros_like(Y)
    P_exaggerated = P * config.early_exaggeration
    buf = np.empty((n, n), dtype=np.float64)
    mix = np.empty((n, n), dtype=np.float64)
    for it in range(config.n_iters):
        early = it < EXPLORATION_ITERS
        momentum = MOMENTUM_EARLY if early else MOMENTUM_LATE
        grad = _gradient_into(P_exaggerated if early else P, Y, buf, mix)
        velocity *= momentum
        velocity -= config.learning_rate * grad
        Y = Y + velocity
        if not np.isfinite(Y).all():
            raise RuntimeError(f"t-SNE diverged to a non-finite layout at iteration {it}")
    return Layout2D(Y=Y, row_ids=row_ids)
