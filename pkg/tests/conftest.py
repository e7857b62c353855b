import numpy as np
import pytest

from pcgscreen.selection import FeatureMatrix


def make_feature_matrix(X, y, subject_ids=None, epoch_idxs=None):
    """FeatureMatrix with one subject per row unless ids are given."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if subject_ids is None:
        subject_ids = np.array([f"s{i:04d}" for i in range(n)])
    if epoch_idxs is None:
        epoch_idxs = np.zeros(n, dtype=np.int64)
    return FeatureMatrix(
        X=X, y=y, subject_ids=np.asarray(subject_ids),
        epoch_idxs=np.asarray(epoch_idxs),
        provenance=tuple((None, f"f{j}") for j in range(X.shape[1])),
    )


def make_grouped_matrix(n_per_class=20, n_features=6, separation=4.0,
                        noise=0.2, epochs_per_subject=3, seed=0):
    """Subject-grouped matrix: each subject contributes several epochs
    around a subject-level mean; class separation along feature 0."""
    rng = np.random.default_rng(seed)
    rows, sids, eidx, ys = [], [], [], []
    for i in range(2 * n_per_class):
        label = 1 if i < n_per_class else 0
        center = rng.standard_normal(n_features) * 0.3
        center[0] += separation * label
        for e in range(epochs_per_subject):
            rows.append(center + noise * rng.standard_normal(n_features))
            sids.append(f"subj{i:03d}")
            eidx.append(e)
            ys.append(label)
    return FeatureMatrix(
        X=np.array(rows), y=np.array(ys), subject_ids=np.array(sids),
        epoch_idxs=np.array(eidx),
        provenance=tuple((None, f"f{j}") for j in range(n_features)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
