"""Subject-grouped repeated cross-validation, majority voting, channel
fusion, and the channel-combination search.

All of a subject's epochs travel together: folds are assigned per
subject, so train and test subject sets are disjoint in every split
(asserted at runtime).  Subject labels come from 2-of-3 majority voting
over that subject's epoch predictions.
"""

from __future__ import annotations

import itertools
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .learn import (
    KernelSpec,
    KnnSpec,
    Metrics,
    decision_to_probability,
    fit_platt,
    knn_predict_batch,
    metrics_from_labels,
    svm_decision,
    svm_train,
)
from .selection import (
    FeatureMatrix,
    incremental_search,
    rank_features,
)

log = logging.getLogger(__name__)

MODE_FEATURE_LEVEL = "feature_level"
MODE_SCORE_LEVEL = "score_level"
FUSION_MODES = (MODE_FEATURE_LEVEL, MODE_SCORE_LEVEL)


@dataclass(frozen=True)
class CvConfig:
    """Stratified subject-grouped k-fold settings, repeated ``iterations``
    times with reshuffled subjects."""

    k: int = 5
    iterations: int = 20
    rng_seed: int = 0
    classifier: KernelSpec | KnnSpec = KernelSpec()

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class FusionSpec:
    """Channel subset, fusion mode, and optional per-channel feature
    configurations (cepstral or sub-band)."""

    channels: tuple[int, ...]
    mode: str = MODE_FEATURE_LEVEL
    config_by_channel: dict | None = None

    def __post_init__(self) -> None:
        if not self.channels:
            raise ConfigError("fusion requires a non-empty channel set")
        if self.mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.mode!r}")
        if self.config_by_channel is not None:
            missing = [c for c in self.channels if c not in self.config_by_channel]
            if missing:
                raise ConfigError(f"channels without a feature config: {missing}")


@dataclass(frozen=True)
class MetricSummary:
    """Mean of per-model metrics across all trained models."""

    sens: float
    spec: float
    acc: float
    f1: float

    def to_dict(self) -> dict:
        return {"sens": self.sens, "spec": self.spec, "acc": self.acc, "f1": self.f1}


@dataclass(frozen=True)
class ModelTrace:
    """One trained model's record inside a cross-validation run."""

    iteration: int
    fold: int
    dim_used: int
    epoch_metrics: Metrics
    subject_metrics: Metrics
    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "fold": self.fold,
            "dim_used": self.dim_used,
            "epoch_metrics": self.epoch_metrics.to_dict(),
            "subject_metrics": self.subject_metrics.to_dict(),
            "train_subjects": list(self.train_subjects),
            "test_subjects": list(self.test_subjects),
        }


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregate epoch- and subject-level results plus per-model traces."""

    epoch_metrics: MetricSummary
    subject_metrics: MetricSummary
    traces: tuple[ModelTrace, ...]
    config: dict = field(default_factory=dict)
    fd_selected: float | None = None

    @property
    def n_models(self) -> int:
        return len(self.traces)

    def to_dict(self) -> dict:
        return {
            "epoch_metrics": self.epoch_metrics.to_dict(),
            "subject_metrics": self.subject_metrics.to_dict(),
            "n_models": self.n_models,
            "fd_selected": self.fd_selected,
            "config": self.config,
            "traces": [t.to_dict() for t in self.traces],
        }


def _summarize(per_model: list[Metrics]) -> MetricSummary:
    return MetricSummary(
        sens=float(np.mean([m.sens for m in per_model])),
        spec=float(np.mean([m.spec for m in per_model])),
        acc=float(np.mean([m.acc for m in per_model])),
        f1=float(np.mean([m.f1 for m in per_model])),
    )


# ---------------------------------------------------------------------------
# Fold construction and voting


def stratified_group_kfold(
    subject_ids: np.ndarray, labels: np.ndarray, k: int, seed: int
) -> np.ndarray:
    """Assign each row to a fold such that all rows of a subject share a
    fold and folds are class-balanced at the subject level.

    Subjects are shuffled by a seeded generator, then dealt round-robin
    into k folds within each class.
    """
    subject_ids = np.asarray(subject_ids)
    labels = np.asarray(labels, dtype=np.int64)
    if subject_ids.shape != labels.shape:
        raise DataError("subject_ids and labels must align")

    subj_label: dict = {}
    for sid, y in zip(subject_ids, labels):
        prev = subj_label.setdefault(sid, int(y))
        if prev != int(y):
            raise DataError(f"subject {sid!r} has inconsistent labels")

    rng = np.random.default_rng(seed)
    fold_of: dict = {}
    for cls in sorted(set(subj_label.values())):
        members = sorted(s for s, y in subj_label.items() if y == cls)
        if len(members) < k:
            raise DataError(
                f"class {cls} has {len(members)} subjects, fewer than k={k}"
            )
        perm = rng.permutation(len(members))
        for pos, idx in enumerate(perm):
            fold_of[members[idx]] = pos % k
    return np.array([fold_of[s] for s in subject_ids], dtype=np.int64)


def majority_vote(epoch_labels) -> int:
    """2-of-3 vote: the label held by at least two of exactly three
    epoch predictions."""
    votes = [int(v) for v in epoch_labels]
    if len(votes) != 3:
        raise DataError(f"expected 3 epochs, got {len(votes)}")
    return 1 if sum(votes) >= 2 else 0


def _vote_subjects(
    subject_ids: np.ndarray,
    y_true: np.ndarray,
    y_pred: np.ndarray,
    strict: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse epoch predictions to one voted label per subject."""
    true_out, pred_out = [], []
    for sid in sorted(set(subject_ids.tolist())):
        mask = subject_ids == sid
        preds = y_pred[mask]
        if len(preds) == 3:
            voted = majority_vote(preds)
        elif strict:
            raise DataError(f"subject {sid!r} has {len(preds)} epochs, expected 3")
        else:
            if len(preds) % 2 == 0:
                raise DataError(
                    f"subject {sid!r} has an even epoch count {len(preds)}; "
                    "majority voting needs an odd count"
                )
            voted = 1 if preds.sum() * 2 >= len(preds) else 0
        true_out.append(int(y_true[mask][0]))
        pred_out.append(voted)
    return np.array(true_out, dtype=np.int64), np.array(pred_out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Classifier dispatch


def _fit_predict(
    spec: KernelSpec | KnnSpec,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Train the configured classifier; return (labels, CAD probabilities)."""
    if isinstance(spec, KernelSpec):
        model = svm_train(X_train, y_train, spec)
        d = np.atleast_1d(svm_decision(model, X_test))
        return (d >= 0).astype(np.int64), np.asarray(decision_to_probability(d))
    if isinstance(spec, KnnSpec):
        labels, frac = knn_predict_batch(X_train, y_train, X_test, spec.k, spec.metric)
        return labels, frac
    raise ConfigError(f"unknown classifier spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Cross-validation


def _model_columns(
    train_fm: FeatureMatrix,
    ranking_method: str | None,
    search: bool,
    dim: int | None,
    cv: CvConfig,
    seed: int,
    strict: bool,
) -> np.ndarray:
    """Pick the feature columns for one model, using train data only."""
    all_cols = np.arange(train_fm.n_features)
    if ranking_method is None:
        return all_cols
    ranking = rank_features(train_fm, ranking_method)
    if search:
        inner_folds = stratified_group_kfold(
            train_fm.subject_ids, train_fm.y, k=4, seed=seed
        )
        inner_val = inner_folds == 0
        inner_train = ~inner_val

        def evaluator(cols: np.ndarray) -> Metrics:
            labels, _ = _fit_predict(
                cv.classifier,
                train_fm.X[inner_train][:, cols],
                train_fm.y[inner_train],
                train_fm.X[inner_val][:, cols],
            )
            s_true, s_pred = _vote_subjects(
                train_fm.subject_ids[inner_val], train_fm.y[inner_val], labels,
                strict=strict,
            )
            return metrics_from_labels(s_true, s_pred)

        best_dim, _ = incremental_search(train_fm, ranking, evaluator)
        return ranking.order[:best_dim]
    if dim is not None:
        if not 1 <= dim <= train_fm.n_features:
            raise ConfigError(f"dimension {dim} outside 1..{train_fm.n_features}")
        return ranking.order[:dim]
    return ranking.order


def cross_validate(
    fm: FeatureMatrix,
    cfg: CvConfig,
    ranking_method: str | None = None,
    search: bool = False,
    dim: int | None = None,
    strict: bool = True,
) -> EvaluationReport:
    """Repeated stratified subject-grouped k-fold evaluation.

    Per split: features are ranked on the train fold only (optionally an
    incremental dimension search runs on an inner split of it), the
    classifier trains on the train fold, test epochs are predicted, and
    subjects voted.  Reported metrics are arithmetic means over all
    iterations * k models.
    """
    traces: list[ModelTrace] = []
    epoch_metrics: list[Metrics] = []
    subject_metrics: list[Metrics] = []
    dims_used: list[int] = []

    for it in range(cfg.iterations):
        folds = stratified_group_kfold(
            fm.subject_ids, fm.y, cfg.k, seed=cfg.rng_seed + it
        )
        for fold in range(cfg.k):
            test_mask = folds == fold
            train_mask = ~test_mask
            train_subjects = set(fm.subject_ids[train_mask].tolist())
            test_subjects = set(fm.subject_ids[test_mask].tolist())
            if train_subjects & test_subjects:
                raise DataError(
                    f"subject leakage between train and test in iteration {it}, "
                    f"fold {fold}"
                )
            train_fm = fm.select_rows(train_mask)
            cols = _model_columns(
                train_fm, ranking_method, search, dim, cfg,
                seed=cfg.rng_seed * 1000 + it, strict=strict,
            )
            labels, _ = _fit_predict(
                cfg.classifier,
                train_fm.X[:, cols],
                train_fm.y,
                fm.X[test_mask][:, cols],
            )
            em = metrics_from_labels(fm.y[test_mask], labels)
            s_true, s_pred = _vote_subjects(
                fm.subject_ids[test_mask], fm.y[test_mask], labels, strict=strict
            )
            sm = metrics_from_labels(s_true, s_pred)
            epoch_metrics.append(em)
            subject_metrics.append(sm)
            dims_used.append(len(cols))
            traces.append(
                ModelTrace(
                    iteration=it, fold=fold, dim_used=len(cols),
                    epoch_metrics=em, subject_metrics=sm,
                    train_subjects=tuple(sorted(train_subjects)),
                    test_subjects=tuple(sorted(test_subjects)),
                )
            )

    return EvaluationReport(
        epoch_metrics=_summarize(epoch_metrics),
        subject_metrics=_summarize(subject_metrics),
        traces=tuple(traces),
        config={
            "k": cfg.k, "iterations": cfg.iterations, "rng_seed": cfg.rng_seed,
            "classifier": _classifier_dict(cfg.classifier),
            "ranking_method": ranking_method, "search": search, "dim": dim,
        },
        fd_selected=float(statistics.median(dims_used)) if dims_used else None,
    )


def _classifier_dict(spec: KernelSpec | KnnSpec) -> dict:
    if isinstance(spec, KernelSpec):
        return {"kind": spec.kind, "C": spec.C, "gamma": spec.gamma, "coef0": spec.coef0}
    return {"kind": "knn", "k": spec.k, "metric": spec.metric}


# ---------------------------------------------------------------------------
# Fusion


def _check_alignment(fms: list[FeatureMatrix]) -> None:
    first = fms[0]
    for fm in fms[1:]:
        if (
            fm.n_samples != first.n_samples
            or not np.array_equal(fm.subject_ids, first.subject_ids)
            or not np.array_equal(fm.epoch_idxs, first.epoch_idxs)
            or not np.array_equal(fm.y, first.y)
        ):
            raise DataError(
                "feature matrices are not row-aligned by (subject, epoch)"
            )


def feature_level_fuse(fms: list[FeatureMatrix]) -> FeatureMatrix:
    """Concatenate per-channel candidate features column-wise.

    Inputs must be row-aligned by (subject, epoch); column provenance is
    preserved.  A single input is returned unchanged.
    """
    if not fms:
        raise DataError("nothing to fuse")
    if len(fms) == 1:
        return fms[0]
    _check_alignment(fms)
    first = fms[0]
    return FeatureMatrix(
        X=np.hstack([fm.X for fm in fms]),
        y=first.y,
        subject_ids=first.subject_ids,
        epoch_idxs=first.epoch_idxs,
        provenance=tuple(itertools.chain.from_iterable(fm.provenance for fm in fms)),
    )


def score_level_fuse(probabilities) -> int:
    """Average per-channel CAD probabilities; label CAD iff mean >= 0.5."""
    probs = np.asarray(list(probabilities), dtype=np.float64)
    if probs.size == 0:
        raise DataError("score fusion needs at least one channel probability")
    return 1 if float(np.mean(probs)) >= 0.5 else 0


def cross_validate_score_fusion(
    fms: list[FeatureMatrix],
    cfg: CvConfig,
    ranking_method: str | None = None,
    dim: int | None = None,
    use_platt: bool = False,
    strict: bool = True,
) -> EvaluationReport:
    """Repeated CV with one classifier per channel; per-epoch CAD
    probabilities are averaged across channels before voting."""
    if not fms:
        raise DataError("score fusion needs at least one channel")
    _check_alignment(fms)
    base = fms[0]

    traces: list[ModelTrace] = []
    epoch_metrics: list[Metrics] = []
    subject_metrics: list[Metrics] = []
    dims_used: list[int] = []

    for it in range(cfg.iterations):
        folds = stratified_group_kfold(
            base.subject_ids, base.y, cfg.k, seed=cfg.rng_seed + it
        )
        for fold in range(cfg.k):
            test_mask = folds == fold
            train_mask = ~test_mask
            train_subjects = set(base.subject_ids[train_mask].tolist())
            test_subjects = set(base.subject_ids[test_mask].tolist())
            if train_subjects & test_subjects:
                raise DataError("subject leakage between train and test")

            prob_sum = np.zeros(int(test_mask.sum()))
            total_dim = 0
            for fm in fms:
                train_fm = fm.select_rows(train_mask)
                cols = _model_columns(
                    train_fm, ranking_method, False, dim, cfg,
                    seed=cfg.rng_seed * 1000 + it, strict=strict,
                )
                total_dim += len(cols)
                if isinstance(cfg.classifier, KernelSpec):
                    model = svm_train(train_fm.X[:, cols], train_fm.y, cfg.classifier)
                    d_test = np.atleast_1d(
                        svm_decision(model, fm.X[test_mask][:, cols])
                    )
                    platt = None
                    if use_platt:
                        d_train = np.atleast_1d(
                            svm_decision(model, train_fm.X[:, cols])
                        )
                        platt = fit_platt(d_train, train_fm.y)
                    prob_sum += np.asarray(decision_to_probability(d_test, platt))
                else:
                    _, frac = knn_predict_batch(
                        train_fm.X[:, cols], train_fm.y,
                        fm.X[test_mask][:, cols],
                        cfg.classifier.k, cfg.classifier.metric,
                    )
                    prob_sum += frac
            fused_probs = prob_sum / len(fms)
            labels = (fused_probs >= 0.5).astype(np.int64)

            em = metrics_from_labels(base.y[test_mask], labels)
            s_true, s_pred = _vote_subjects(
                base.subject_ids[test_mask], base.y[test_mask], labels, strict=strict
            )
            sm = metrics_from_labels(s_true, s_pred)
            epoch_metrics.append(em)
            subject_metrics.append(sm)
            dims_used.append(total_dim)
            traces.append(
                ModelTrace(
                    iteration=it, fold=fold, dim_used=total_dim,
                    epoch_metrics=em, subject_metrics=sm,
                    train_subjects=tuple(sorted(train_subjects)),
                    test_subjects=tuple(sorted(test_subjects)),
                )
            )

    return EvaluationReport(
        epoch_metrics=_summarize(epoch_metrics),
        subject_metrics=_summarize(subject_metrics),
        traces=tuple(traces),
        config={
            "k": cfg.k, "iterations": cfg.iterations, "rng_seed": cfg.rng_seed,
            "classifier": _classifier_dict(cfg.classifier),
            "ranking_method": ranking_method, "dim": dim,
            "mode": MODE_SCORE_LEVEL, "use_platt": use_platt,
        },
        fd_selected=float(statistics.median(dims_used)) if dims_used else None,
    )


# ---------------------------------------------------------------------------
# Hyperparameter grid search

GRID_C = (0.1, 1.0, 10.0, 100.0)
GRID_GAMMA_SCALE = (0.001, 0.01, 0.1, 1.0)


def svm_grid_search(
    fm: FeatureMatrix,
    base: KernelSpec = KernelSpec(),
    Cs: tuple[float, ...] = GRID_C,
    gamma_scales: tuple[float, ...] = GRID_GAMMA_SCALE,
    seed: int = 0,
    strict: bool = True,
) -> KernelSpec:
    """Pick (C, gamma) on a subject-grouped inner validation split.

    Gamma candidates are ``scale / n_features``.  Ties resolve toward the
    grid order, so the result is deterministic for a fixed seed.
    """
    folds = stratified_group_kfold(fm.subject_ids, fm.y, k=4, seed=seed)
    val = folds == 0
    train = ~val
    best = None
    best_acc = -np.inf
    for C in Cs:
        for scale in gamma_scales:
            spec = KernelSpec(
                kind=base.kind, C=C, gamma=scale / fm.n_features, coef0=base.coef0
            )
            labels, _ = _fit_predict(
                spec, fm.X[train], fm.y[train], fm.X[val]
            )
            s_true, s_pred = _vote_subjects(
                fm.subject_ids[val], fm.y[val], labels, strict=strict
            )
            acc = metrics_from_labels(s_true, s_pred).acc
            if acc > best_acc:
                best_acc = acc
                best = spec
    return best


# ---------------------------------------------------------------------------
# Channel-combination search


def _evaluate_subset(args) -> tuple[tuple[int, ...], dict]:
    (subset, fms, cfg, mode, ranking_method, dim, strict) = args
    if mode == MODE_FEATURE_LEVEL:
        fused = feature_level_fuse([fms[c] for c in subset])
        report = cross_validate(
            fused, cfg, ranking_method=ranking_method, dim=dim, strict=strict
        )
    else:
        report = cross_validate_score_fusion(
            [fms[c] for c in subset], cfg,
            ranking_method=ranking_method, dim=dim, strict=strict,
        )
    return subset, {
        "channels": list(subset),
        "n_channels": len(subset),
        "fd": report.fd_selected,
        "epoch_metrics": report.epoch_metrics.to_dict(),
        "subject_metrics": report.subject_metrics.to_dict(),
    }


def channel_combination_search(
    per_channel_fms: dict[int, FeatureMatrix],
    cfg: CvConfig,
    mode: str = MODE_FEATURE_LEVEL,
    ranking_method: str | None = None,
    dim: int | None = None,
    subsets: list[tuple[int, ...]] | None = None,
    n_jobs: int = 1,
    strict: bool = True,
) -> dict:
    """Evaluate channel subsets; report the best subset per cardinality.

    By default all non-empty subsets of the available channels are
    enumerated.  Best-per-cardinality is ranked by subject accuracy with
    F1 as the tie-break.  Results are reduced in subset order, so the
    output is independent of scheduling.
    """
    if mode not in FUSION_MODES:
        raise ConfigError(f"unknown fusion mode {mode!r}")
    channels = sorted(per_channel_fms)
    if not channels:
        raise DataError("no channels to search")
    if subsets is None:
        subsets = [
            combo
            for r in range(1, len(channels) + 1)
            for combo in itertools.combinations(channels, r)
        ]
    else:
        subsets = [tuple(sorted(s)) for s in subsets]
        for s in subsets:
            for c in s:
                if c not in per_channel_fms:
                    raise ConfigError(f"channel {c} has no feature matrix")

    jobs = [
        (subset, per_channel_fms, cfg, mode, ranking_method, dim, strict)
        for subset in subsets
    ]
    results: dict[tuple[int, ...], dict] = {}
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for subset, row in pool.map(_evaluate_subset, jobs):
                results[subset] = row
    else:
        for job in jobs:
            subset, row = _evaluate_subset(job)
            results[subset] = row

    rows = [results[s] for s in subsets]
    best: dict[int, dict] = {}
    for row in rows:
        card = row["n_channels"]
        key = (row["subject_metrics"]["acc"], row["subject_metrics"]["f1"])
        cur = best.get(card)
        if cur is None or key > (
            cur["subject_metrics"]["acc"], cur["subject_metrics"]["f1"]
        ):
            best[card] = row
    return {
        "mode": mode,
        "all_subsets": rows,
        "best_per_cardinality": [best[c] for c in sorted(best)],
    }


# ---------------------------------------------------------------------------
# Train on everything, predict a held-out cohort


def train_full_and_predict(
    train_fm: FeatureMatrix,
    heldout_fm: FeatureMatrix,
    classifier: KernelSpec | KnnSpec = KernelSpec(),
    ranking_method: str | None = None,
    dim: int | None = None,
    strict: bool = True,
) -> dict[str, int]:
    """Fit once on the full training matrix and vote each held-out subject.

    The held-out matrix must carry identical column provenance, i.e. the
    same extraction configuration.
    """
    if train_fm.provenance != heldout_fm.provenance:
        raise DataError(
            "feature configuration mismatch between train and held-out extraction"
        )
    if heldout_fm.n_samples == 0:
        return {}
    cols = np.arange(train_fm.n_features)
    if ranking_method is not None:
        ranking = rank_features(train_fm, ranking_method)
        cols = ranking.order[:dim] if dim is not None else ranking.order
    labels, _ = _fit_predict(
        classifier, train_fm.X[:, cols], train_fm.y, heldout_fm.X[:, cols]
    )
    out: dict[str, int] = {}
    for sid in sorted(set(heldout_fm.subject_ids.tolist())):
        mask = heldout_fm.subject_ids == sid
        preds = labels[mask]
        if len(preds) == 3:
            out[sid] = majority_vote(preds)
        elif strict:
            raise DataError(f"held-out subject {sid!r} has {len(preds)} epochs")
        elif len(preds) % 2 == 1:
            out[sid] = 1 if preds.sum() * 2 >= len(preds) else 0
        else:
            raise DataError(
                f"held-out subject {sid!r} has an even epoch count {len(preds)}"
            )
    return out
