"""Multi-channel phonocardiogram screening pipeline.

Preprocessing, spectral and cepstral feature extraction, feature
selection, SVM/k-NN classification under subject-grouped repeated
cross-validation, channel fusion, and a synthetic data generator.
"""

__version__ = "0.1.0"

from .cepstral import CepstralConfig, FilterBank, build_filterbank, epoch_feature_vector
from .dataio import (
    DatasetManifest,
    EpochAnnotations,
    Recording,
    load_annotations,
    load_manifest,
    load_recording,
    write_recording,
)
from .errors import ConfigError, DataError, NumericError, PcgScreenError
from .evaluate import (
    CvConfig,
    EvaluationReport,
    FusionSpec,
    channel_combination_search,
    cross_validate,
    feature_level_fuse,
    majority_vote,
    score_level_fuse,
    stratified_group_kfold,
    train_full_and_predict,
)
from .learn import (
    KernelSpec,
    KnnSpec,
    Metrics,
    SvmModel,
    compute_metrics,
    decision_to_probability,
    knn_predict,
    svm_decision,
    svm_train,
    wilcoxon_rank_sum,
)
from .preprocess import (
    Epoch,
    FilterSpec,
    lowpass_filter,
    preprocess_recording,
    resample,
    segment_epochs,
    z_normalize,
)
from .selection import (
    FeatureMatrix,
    RankedFeatureSet,
    incremental_search,
    mrmr_rank,
    relieff_rank,
)
from .spectral import PsdEstimate, SubbandConfig, hanning_window, subband_powers, welch_psd
from .synth import SynthParams, synth_dataset, synth_subject

__all__ = [
    "__version__",
    "CepstralConfig", "FilterBank", "build_filterbank", "epoch_feature_vector",
    "DatasetManifest", "EpochAnnotations", "Recording",
    "load_annotations", "load_manifest", "load_recording", "write_recording",
    "ConfigError", "DataError", "NumericError", "PcgScreenError",
    "CvConfig", "EvaluationReport", "FusionSpec",
    "channel_combination_search", "cross_validate", "feature_level_fuse",
    "majority_vote", "score_level_fuse", "stratified_group_kfold",
    "train_full_and_predict",
    "KernelSpec", "KnnSpec", "Metrics", "SvmModel", "compute_metrics",
    "decision_to_probability", "knn_predict", "svm_decision", "svm_train",
    "wilcoxon_rank_sum",
    "Epoch", "FilterSpec", "lowpass_filter", "preprocess_recording", "resample",
    "segment_epochs", "z_normalize",
    "FeatureMatrix", "RankedFeatureSet", "incremental_search", "mrmr_rank",
    "relieff_rank",
    "PsdEstimate", "SubbandConfig", "hanning_window", "subband_powers", "welch_psd",
    "SynthParams", "synth_dataset", "synth_subject",
]
