"""Classifiers and statistics: kernel SVM trained by sequential minimal
optimization, k-nearest neighbors, decision-to-probability mapping,
rank-sum testing, and confusion metrics.

Labels are CAD=1 (positive class) and Normal=0 throughout.  Decision
ties predict CAD, in the SVM sign rule and in k-NN vote ties alike.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

KERNEL_RBF = "rbf"
KERNEL_LINEAR = "linear"
KERNEL_POLY3 = "poly3"
KERNEL_SIGMOID = "sigmoid"
KERNELS = (KERNEL_RBF, KERNEL_LINEAR, KERNEL_POLY3, KERNEL_SIGMOID)

KNN_METRICS = ("euclidean", "cosine", "cityblock", "correlation")

_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    ``gamma=None`` resolves to 1 / n_features at training time.
    """

    kind: str = KERNEL_RBF
    C: float = 1.0
    gamma: float | None = None
    coef0: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kind!r}, expected one of {KERNELS}")
        if self.C <= 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class KnnSpec:
    """k-nearest-neighbor reference-set classifier settings."""

    k: int = 11
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.metric not in KNN_METRICS:
            raise ConfigError(
                f"unknown metric {self.metric!r}, expected one of {KNN_METRICS}"
            )


def kernel_matrix(
    kind: str, gamma: float, coef0: float, A: np.ndarray, B: np.ndarray
) -> np.ndarray:
    """Gram matrix K[i, j] = k(A[i], B[j])."""
    if kind == KERNEL_LINEAR:
        return A @ B.T
    if kind == KERNEL_RBF:
        sq_a = np.sum(A * A, axis=1)[:, None]
        sq_b = np.sum(B * B, axis=1)[None, :]
        d2 = np.maximum(sq_a + sq_b - 2.0 * (A @ B.T), 0.0)
        return np.exp(-gamma * d2)
    if kind == KERNEL_POLY3:
        return (gamma * (A @ B.T) + coef0) ** 3
    if kind == KERNEL_SIGMOID:
        return np.tanh(gamma * (A @ B.T) + coef0)
    raise ConfigError(f"unknown kernel {kind!r}")


@dataclass(frozen=True)
class SvmModel:
    """Trained C-SVC: support vectors in scaled space, dual coefficients
    alpha_i * y_i, bias, kernel, and the training feature scaling stats."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelSpec
    gamma: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    converged: bool = True
    n_iter: int = 0
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_support(self) -> int:
        return len(self.dual_coefs)

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


def _solve_smo(
    Q: np.ndarray,
    ybin: np.ndarray,
    C: float,
    tol: float,
    max_iter: int,
    track_objective: bool,
) -> tuple[np.ndarray, float, bool, int, list[float]]:
    """Maximal-violating-pair SMO on the C-SVC dual.

    min 1/2 a'Qa - e'a  s.t.  0 <= a <= C,  y'a = 0.
    Returns (alpha, rho, converged, n_iter, objective trace); the
    decision bias is -rho.
    """
    n = len(ybin)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of the dual objective at alpha = 0
    trace: list[float] = []

    pos = ybin > 0
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        can_up = (pos & (alpha < C - _TAU)) | (~pos & (alpha > _TAU))
        can_low = (~pos & (alpha < C - _TAU)) | (pos & (alpha > _TAU))
        yG = -ybin * G
        up_vals = np.where(can_up, yG, -np.inf)
        low_vals = np.where(can_low, yG, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        m_val = up_vals[i]
        M_val = low_vals[j]
        if m_val - M_val <= tol:
            converged = True
            break

        old_i, old_j = alpha[i], alpha[j]
        if ybin[i] != ybin[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        G += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
        if track_objective:
            trace.append(0.5 * float(alpha @ (G - 1.0)))

    if not converged:
        log.warning("SMO hit the iteration cap (%d) before tolerance %g", max_iter, tol)

    # Bias from the KKT conditions: average y*G over free vectors, else
    # the midpoint of the active-bound interval.
    yG_full = ybin * G
    free = (alpha > _TAU) & (alpha < C - _TAU)
    if np.any(free):
        rho = float(np.mean(yG_full[free]))
    else:
        can_up = (pos & (alpha < C - _TAU)) | (~pos & (alpha > _TAU))
        can_low = (~pos & (alpha < C - _TAU)) | (pos & (alpha > _TAU))
        ub = np.min(np.where(can_up, yG_full, np.inf))
        lb = np.max(np.where(can_low, yG_full, -np.inf))
        rho = float((ub + lb) / 2.0)
    return alpha, rho, converged, it, trace


def svm_train(
    X: np.ndarray,
    y: np.ndarray,
    kernel: KernelSpec = KernelSpec(),
    tol: float = 1e-3,
    max_iter: int | None = None,
    track_objective: bool = False,
) -> SvmModel:
    """Train a two-class C-SVC by sequential minimal optimization.

    Features are internally scaled to zero mean and unit variance using
    training statistics.  Raises on single-class or non-finite input.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError("X must be 2-D with one label per row")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    classes = np.unique(y)
    if len(classes) != 2:
        raise DataError(f"need exactly two classes in training labels, got {classes}")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    Xs = (X - mean) / std
    ybin = np.where(y == 1, 1.0, -1.0)

    gamma = kernel.gamma if kernel.gamma is not None else 1.0 / X.shape[1]
    K = kernel_matrix(kernel.kind, gamma, kernel.coef0, Xs, Xs)
    Q = (ybin[:, None] * ybin[None, :]) * K

    if max_iter is None:
        max_iter = max(100_000, 100 * len(y))
    alpha, rho, converged, n_iter, trace = _solve_smo(
        Q, ybin, kernel.C, tol, max_iter, track_objective
    )

    sv = alpha > _TAU
    return SvmModel(
        support_vectors=Xs[sv],
        dual_coefs=alpha[sv] * ybin[sv],
        bias=-rho,
        kernel=kernel,
        gamma=gamma,
        feature_mean=mean,
        feature_std=std,
        converged=converged,
        n_iter=n_iter,
        objective_trace=tuple(trace),
    )


def svm_decision(model: SvmModel, x: np.ndarray) -> float | np.ndarray:
    """Decision value d(x) = sum_i alpha_i y_i k(s_i, x) + b.

    Accepts a single vector or a (n, d) batch; predicted label is CAD
    iff d >= 0.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise DataError(
            f"dimension mismatch: model expects {model.n_features}, got {x.shape[1]}"
        )
    xs = (x - model.feature_mean) / model.feature_std
    K = kernel_matrix(model.kernel.kind, model.gamma, model.kernel.coef0,
                      xs, model.support_vectors)
    d = K @ model.dual_coefs + model.bias
    return float(d[0]) if single else d


def svm_predict(model: SvmModel, X: np.ndarray) -> np.ndarray:
    d = np.atleast_1d(svm_decision(model, X))
    return (d >= 0).astype(np.int64)


def decision_to_probability(
    d: float | np.ndarray, platt: tuple[float, float] | None = None
) -> float | np.ndarray:
    """Map decision values to probabilities of the CAD class.

    Default is the logistic link p = 1 / (1 + exp(-d)).  When fitted
    Platt parameters (A, B) are given, p = 1 / (1 + exp(A*d + B)).
    """
    d = np.asarray(d, dtype=np.float64)
    z = -d if platt is None else platt[0] * d + platt[1]
    z = np.clip(z, -500, 500)
    p = 1.0 / (1.0 + np.exp(z))
    return float(p) if p.ndim == 0 else p


def fit_platt(decisions: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit sigmoid parameters (A, B) on decision values by regularized
    maximum likelihood (Newton iterations with backtracking)."""
    f = np.asarray(decisions, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n1 = int(np.sum(y == 1))
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise DataError("Platt fitting requires both classes")
    hi = (n1 + 1.0) / (n1 + 2.0)
    lo = 1.0 / (n0 + 2.0)
    t = np.where(y == 1, hi, lo)

    A, B = 0.0, math.log((n0 + 1.0) / (n1 + 1.0))
    sigma = 1e-12
    min_step = 1e-10

    def objective(a: float, b: float) -> float:
        z = a * f + b
        # stable log(1 + exp(...)) accumulation
        pos = z >= 0
        obj = np.where(pos, t * z + np.log1p(np.exp(-z)),
                       (t - 1) * z + np.log1p(np.exp(z)))
        return float(np.sum(obj))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = A * f + B
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        q = 1.0 - p
        d1 = t - p
        d2 = p * q
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        h11 = float(np.sum(f * f * d2)) + sigma
        h22 = float(np.sum(d2)) + sigma
        h21 = float(np.sum(f * d2))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            cand = objective(A + step * dA, B + step * dB)
            if cand < fval + 1e-4 * step * gd:
                A += step * dA
                B += step * dB
                fval = cand
                break
            step /= 2.0
        else:
            log.warning("Platt line search failed to make progress")
            break
    return A, B


# ---------------------------------------------------------------------------
# k-nearest neighbors


def _pairwise_distances(Q: np.ndarray, R: np.ndarray, metric: str) -> np.ndarray:
    """Distances from each query row to each reference row."""
    if metric == "euclidean":
        sq_q = np.sum(Q * Q, axis=1)[:, None]
        sq_r = np.sum(R * R, axis=1)[None, :]
        return np.sqrt(np.maximum(sq_q + sq_r - 2.0 * (Q @ R.T), 0.0))
    if metric == "cityblock":
        return np.abs(Q[:, None, :] - R[None, :, :]).sum(axis=2)
    if metric in ("cosine", "correlation"):
        if metric == "correlation":
            Q = Q - Q.mean(axis=1, keepdims=True)
            R = R - R.mean(axis=1, keepdims=True)
        qn = np.linalg.norm(Q, axis=1)
        rn = np.linalg.norm(R, axis=1)
        denom = qn[:, None] * rn[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            sim = np.where(denom > 0, (Q @ R.T) / denom, 0.0)
        return 1.0 - sim
    raise ConfigError(f"unknown metric {metric!r}")


def knn_predict_batch(
    train_X: np.ndarray,
    train_y: np.ndarray,
    Q: np.ndarray,
    k: int = 11,
    metric: str = "euclidean",
) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote over the k nearest references for each query row.

    Returns (labels, cad_vote_fractions).  Distance ties break toward
    the lower training index; vote ties predict CAD.
    """
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    train_X = np.asarray(train_X, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    Q = np.asarray(Q, dtype=np.float64)
    if k > len(train_X):
        raise ConfigError(f"k={k} exceeds the reference set size {len(train_X)}")
    dist = _pairwise_distances(Q, train_X, metric)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = train_y[nearest]
    cad_frac = votes.mean(axis=1)
    labels = (cad_frac >= 0.5).astype(np.int64)
    return labels, cad_frac


def knn_predict(
    train_X: np.ndarray,
    train_y: np.ndarray,
    x: np.ndarray,
    k: int = 11,
    metric: str = "euclidean",
) -> int:
    """Single-query majority-vote label."""
    labels, _ = knn_predict_batch(train_X, train_y, np.asarray(x)[None, :], k, metric)
    return int(labels[0])


# ---------------------------------------------------------------------------
# Wilcoxon rank-sum test


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_ranksum_p(ranks: np.ndarray, n: int, w_obs: float) -> float:
    """Two-sided exact p-value by counting size-n subsets of the pooled
    midranks at or beyond the observed rank sum (both tails doubled)."""
    scaled = np.rint(ranks * 2).astype(np.int64)  # midranks are multiples of 1/2
    total = int(scaled.sum())
    # dp[c][s]: number of ways to pick c ranks summing to s
    dp = np.zeros((n + 1, total + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for r in scaled:
        prev = dp[0:n, : total + 1 - r].copy()
        dp[1:n + 1, r:] += prev
    counts = dp[n]
    n_total = counts.sum()
    w_scaled = int(np.rint(w_obs * 2))
    p_le = counts[: w_scaled + 1].sum() / n_total
    p_ge = counts[w_scaled:].sum() / n_total
    return float(min(1.0, 2.0 * min(p_le, p_ge)))


def wilcoxon_rank_sum(a: np.ndarray, b: np.ndarray, exact_limit: int = 300_000) -> float:
    """Two-sided rank-sum test p-value with midrank tie handling.

    Uses the exact subset-sum null distribution when the number of
    group assignments is at most ``exact_limit``; otherwise the normal
    approximation with tie-corrected variance and continuity correction.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise DataError("empty sample")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    w = float(np.sum(ranks[:n]))
    big_n = n + m

    if math.comb(big_n, n) <= exact_limit:
        return _exact_ranksum_p(ranks, n, w)

    mu = n * (big_n + 1) / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (big_n * (big_n - 1))
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0:
        return 1.0
    diff = w - mu
    z = (diff - 0.5 * np.sign(diff)) / math.sqrt(var)
    return float(math.erfc(abs(z) / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class Metrics:
    """Sensitivity, specificity, accuracy, and F1 with confusion counts.

    CAD is the positive class.  ``degenerate`` flags metrics reported
    as 0 because their denominator was empty.
    """

    sens: float
    spec: float
    acc: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "sens": self.sens, "spec": self.spec, "acc": self.acc, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "degenerate": self.degenerate,
        }


def compute_metrics(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    total = tp + fp + tn + fn
    if total == 0:
        raise DataError("empty confusion")
    degenerate = False
    if tp + fn > 0:
        sens = tp / (tp + fn)
    else:
        sens, degenerate = 0.0, True
    if tn + fp > 0:
        spec = tn / (tn + fp)
    else:
        spec, degenerate = 0.0, True
    acc = (tp + tn) / total
    if tp + fp > 0:
        prec = tp / (tp + fp)
    else:
        prec, degenerate = 0.0, True
    if prec + sens > 0:
        f1 = 2.0 * prec * sens / (prec + sens)
    else:
        f1, degenerate = 0.0, True
    return Metrics(
        sens=sens, spec=spec, acc=acc, f1=f1,
        tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn), degenerate=degenerate,
    )


def metrics_from_labels(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError("label arrays must have matching shapes")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return compute_metrics(tp, fp, tn, fn)


# ---------------------------------------------------------------------------
# Model serialization

_MODEL_FORMAT_VERSION = 1


def save_svm_model(model: SvmModel, path: str | Path) -> Path:
    """Persist a trained model as a versioned .npz container."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    np.savez(
        path,
        format_version=np.int64(_MODEL_FORMAT_VERSION),
        kernel_kind=np.str_(model.kernel.kind),
        C=np.float64(model.kernel.C),
        gamma=np.float64(model.gamma),
        coef0=np.float64(model.kernel.coef0),
        support_vectors=model.support_vectors,
        dual_coefs=model.dual_coefs,
        bias=np.float64(model.bias),
        feature_mean=model.feature_mean,
        feature_std=model.feature_std,
    )
    return path


def load_svm_model(path: str | Path) -> SvmModel:
    try:
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"])
            if version != _MODEL_FORMAT_VERSION:
                raise DataError(f"unsupported model format version {version}")
            kernel = KernelSpec(
                kind=str(z["kernel_kind"]), C=float(z["C"]),
                gamma=float(z["gamma"]), coef0=float(z["coef0"]),
            )
            return SvmModel(
                support_vectors=z["support_vectors"],
                dual_coefs=z["dual_coefs"],
                bias=float(z["bias"]),
                kernel=kernel,
                gamma=float(z["gamma"]),
                feature_mean=z["feature_mean"],
                feature_std=z["feature_std"],
            )
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"unreadable model file {path}: {exc}") from exc
