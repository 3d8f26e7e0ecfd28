from .classifiers import (
    KMeansResult,
    MeanShiftResult,
    RandomForest,
    Svm,
    estimate_bandwidth,
    kmeans,
    mean_shift,
    random_forest,
    svm,
)
from .metrics import hungarian_accuracy, macro_f1, nmi
from .protocol import (
    CLASSIFIERS,
    SUPERVISED,
    UNSUPERVISED,
    LabeledEmbeddingSet,
    MetricReport,
    grid_search,
    run_protocol,
    stratified_split,
)

__all__ = [
    "KMeansResult",
    "MeanShiftResult",
    "RandomForest",
    "Svm",
    "estimate_bandwidth",
    "kmeans",
    "mean_shift",
    "random_forest",
    "svm",
    "hungarian_accuracy",
    "macro_f1",
    "nmi",
    "CLASSIFIERS",
    "SUPERVISED",
    "UNSUPERVISED",
    "LabeledEmbeddingSet",
    "MetricReport",
    "grid_search",
    "run_protocol",
    "stratified_split",
]
