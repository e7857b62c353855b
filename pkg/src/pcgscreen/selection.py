"""Feature ranking by mutual information (MRMR) and neighbor weights
(ReliefF), plus the incremental dimension search used to pick how many
top-ranked features to keep."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

METHOD_MRMR = "mrmr"
METHOD_RELIEFF = "relieff"


@dataclass(frozen=True)
class FeatureMatrix:
    """Epoch-by-feature matrix with labels, subject ids, and provenance.

    ``y`` holds CAD=1 / Normal=0.  ``provenance`` records, per column,
    the source channel and a short feature description.
    """

    X: np.ndarray
    y: np.ndarray
    subject_ids: np.ndarray
    epoch_idxs: np.ndarray
    provenance: tuple[tuple[int | None, str], ...]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        sids = np.asarray(self.subject_ids)
        eidx = np.asarray(self.epoch_idxs, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("X must be 2-D [n_epochs x n_features]")
        if not (len(y) == len(sids) == len(eidx) == X.shape[0]):
            raise DataError("row metadata length must match X")
        if len(self.provenance) != X.shape[1]:
            raise DataError("provenance length must match the feature count")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 (Normal) or 1 (CAD)")
        for sid in np.unique(sids):
            if len(np.unique(y[sids == sid])) > 1:
                raise DataError(f"subject {sid!r} has inconsistent labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "subject_ids", sids)
        object.__setattr__(self, "epoch_idxs", eidx)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def select_columns(self, cols: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        cols = np.asarray(cols, dtype=np.int64)
        return FeatureMatrix(
            X=self.X[:, cols],
            y=self.y,
            subject_ids=self.subject_ids,
            epoch_idxs=self.epoch_idxs,
            provenance=tuple(self.provenance[c] for c in cols),
        )

    def select_rows(self, mask: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            X=self.X[mask],
            y=self.y[mask],
            subject_ids=self.subject_ids[mask],
            epoch_idxs=self.epoch_idxs[mask],
            provenance=self.provenance,
        )


@dataclass(frozen=True)
class RankedFeatureSet:
    """A permutation of column indices (best first) plus per-feature scores."""

    order: np.ndarray
    scores: np.ndarray
    method: str

    def __post_init__(self) -> None:
        order = np.asarray(self.order, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if sorted(order.tolist()) != list(range(len(order))):
            raise DataError("ranking order must be a permutation of column indices")
        if len(scores) != len(order):
            raise DataError("scores must align with columns")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "scores", scores)


# ---------------------------------------------------------------------------
# MRMR


def _equal_frequency_codes(col: np.ndarray, bins: int) -> np.ndarray:
    """Discretize one column into at most ``bins`` equal-frequency bins.

    Tied values always land in the same bin, so constant columns map to
    a single bin.
    """
    qs = np.quantile(col, [i / bins for i in range(1, bins)])
    return np.searchsorted(qs, col, side="right").astype(np.int64)


def mutual_information_bits(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information between two discrete code arrays, in bits."""
    ka = int(a.max()) + 1
    kb = int(b.max()) + 1
    joint = np.bincount(a * kb + b, minlength=ka * kb).astype(np.float64)
    joint = joint.reshape(ka, kb) / len(a)
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    outer = pa[:, None] * pb[None, :]
    return float(np.sum(joint[nz] * np.log2(joint[nz] / outer[nz])))


def mrmr_rank(fm: FeatureMatrix, bins: int = 10) -> RankedFeatureSet:
    """Greedy minimum-redundancy maximum-relevance ranking.

    Features are discretized into equal-frequency bins.  The first pick
    maximizes relevance I(x; y); each subsequent pick maximizes
    I(x; y) - mean over already-selected s of I(x; s).  Index order
    breaks ties.
    """
    if fm.n_features < 1:
        raise DataError("empty feature matrix")
    d = fm.n_features
    codes = np.column_stack(
        [_equal_frequency_codes(fm.X[:, j], bins) for j in range(d)]
    )
    y = fm.y.astype(np.int64)
    relevance = np.array(
        [mutual_information_bits(codes[:, j], y) for j in range(d)]
    )

    order = np.empty(d, dtype=np.int64)
    scores = np.empty(d)
    remaining = list(range(d))
    redundancy_sum = np.zeros(d)

    first = int(np.argmax(relevance))
    order[0] = first
    scores[first] = relevance[first]
    remaining.remove(first)

    for step in range(1, d):
        last = order[step - 1]
        for j in remaining:
            redundancy_sum[j] += mutual_information_bits(codes[:, j], codes[:, last])
        crit = np.full(d, -np.inf)
        for j in remaining:
            crit[j] = relevance[j] - redundancy_sum[j] / step
        pick = int(np.argmax(crit))
        order[step] = pick
        scores[pick] = crit[pick]
        remaining.remove(pick)

    return RankedFeatureSet(order=order, scores=scores, method=METHOD_MRMR)


# ---------------------------------------------------------------------------
# ReliefF


def relieff_rank(fm: FeatureMatrix, k: int = 100) -> RankedFeatureSet:
    """Neighbor-based feature weights.

    Every instance contributes: feature differences to its k nearest
    same-class neighbors are subtracted and those to its k nearest
    opposite-class neighbors added.  Differences are normalized by the
    feature range; neighbor influence decays with distance rank, the
    weights (k - r + 1) normalized to sum to 1 within each neighbor set.
    Neighbors are found with the Euclidean metric over z-scored
    features; ties break toward the lowest row index.  Weights are
    averaged over instances, so a class-independent feature scores
    near 0 regardless of the sample size.
    """
    classes, counts = np.unique(fm.y, return_counts=True)
    if len(classes) < 2:
        raise DataError("ReliefF requires two classes")
    min_count = int(counts.min())
    k_eff = min(k, min_count - 1)
    if k_eff < 1:
        raise DataError("a class has too few members for neighbor search")
    if k_eff < k:
        log.warning("ReliefF neighbor count clamped from %d to %d", k, k_eff)

    X = fm.X
    n, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd

    ranges = X.max(axis=0) - X.min(axis=0)
    inv_range = np.zeros(d)
    nz = ranges > 0
    inv_range[nz] = 1.0 / ranges[nz]

    sq = np.sum(Z * Z, axis=1)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.fill_diagonal(dist2, np.inf)

    rank_w = np.arange(k_eff, 0, -1, dtype=np.float64)
    rank_w /= rank_w.sum()

    weights = np.zeros(d)
    for i in range(n):
        same = np.flatnonzero((fm.y == fm.y[i]))
        same = same[same != i]
        opp = np.flatnonzero(fm.y != fm.y[i])
        hits = same[np.argsort(dist2[i, same], kind="stable")[:k_eff]]
        misses = opp[np.argsort(dist2[i, opp], kind="stable")[:k_eff]]
        hit_diff = np.abs(X[hits] - X[i]) * inv_range
        miss_diff = np.abs(X[misses] - X[i]) * inv_range
        weights += rank_w @ miss_diff - rank_w @ hit_diff
    weights /= n

    order = np.argsort(-weights, kind="stable")
    return RankedFeatureSet(order=order, scores=weights, method=METHOD_RELIEFF)


def rank_features(fm: FeatureMatrix, method: str, **kwargs) -> RankedFeatureSet:
    if method == METHOD_MRMR:
        return mrmr_rank(fm, **kwargs)
    if method == METHOD_RELIEFF:
        return relieff_rank(fm, **kwargs)
    raise DataError(f"unknown ranking method {method!r}")


# ---------------------------------------------------------------------------
# Incremental dimension search


def search_dimensions(n_features: int, step: int = 2) -> list[int]:
    """Candidate dimensions {step, 2*step, ...} up to n_features,
    always including n_features itself."""
    dims = list(range(step, n_features + 1, step))
    if not dims or dims[-1] != n_features:
        dims.append(n_features)
    return dims


def incremental_search(
    fm: FeatureMatrix,
    ranking: RankedFeatureSet,
    evaluator: Callable[[np.ndarray], object],
    step: int = 2,
) -> tuple[int, object]:
    """Evaluate growing prefixes of the ranking; return the dimension
    maximizing subject-level accuracy, ties toward smaller dimension.

    ``evaluator`` maps a column-index array to an object exposing an
    ``acc`` attribute (subject-level accuracy).
    """
    if fm.n_features != len(ranking.order):
        raise DataError("ranking does not match the feature matrix")
    best_dim = None
    best_metrics = None
    best_acc = -np.inf
    for dim in search_dimensions(fm.n_features, step):
        cols = ranking.order[:dim]
        metrics = evaluator(cols)
        acc = float(getattr(metrics, "acc"))
        if acc > best_acc:
            best_acc = acc
            best_dim = dim
            best_metrics = metrics
    return best_dim, best_metrics
