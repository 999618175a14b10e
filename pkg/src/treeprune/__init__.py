"""Dyadic-tree classification under covariate shift with adaptive local pruning."""
from .core import DataError, Dataset, LabeledSample, SplitRule, load_dataset, normalize_features, \
    save_dataset, subsample, threshold_split
from .dyadic_tree import CYCLICAL, REGULAR, CellId, CellStats, TreeIndex, build_index, tree_levels
from .ici import IciConfig, IciTrace, ici_classify, ici_predict_batch
from .synth import SyntheticSpec, bayes_risk_mc, eta_true, excess_risk_mc, sample_synthetic

__all__ = [
    "DataError", "Dataset", "LabeledSample", "SplitRule", "load_dataset", "normalize_features",
    "save_dataset", "subsample", "threshold_split",
    "CYCLICAL", "REGULAR", "CellId", "CellStats", "TreeIndex", "build_index", "tree_levels",
    "IciConfig", "IciTrace", "ici_classify", "ici_predict_batch",
    "SyntheticSpec", "bayes_risk_mc", "eta_true", "excess_risk_mc", "sample_synthetic",
]
