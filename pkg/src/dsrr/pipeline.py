"""End-to-end experiment: transform, split, prune, fit, evaluate."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .classifiers import forest_fit, knn_fit, tree_fit
from .correlation import DEFAULT_BINS, DEFAULT_TAU_THRESHOLD, CorrelationReport, prune_features
from .dataset import FeatureTable, apply_dsrr, stratified_indices
from .errors import ParameterError
from .evaluation import MetricsReport, confusion, metrics
from .rescaled_range import DsrrConfig

log = logging.getLogger(__name__)

MODEL_ALIASES = {"knn": "knn", "tree": "tree", "dt": "tree", "rf": "rf", "forest": "rf"}


@dataclass
class ModelConfig:
    kind: str = "rf"
    k: int = 5
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in MODEL_ALIASES:
            raise ParameterError(f"unknown model {self.kind!r}; choose from knn, tree, rf")
        self.kind = MODEL_ALIASES[self.kind]


@dataclass
class PipelineConfig:
    dsrr: DsrrConfig = field(default_factory=DsrrConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    prune: bool = True
    phik_one: bool = True
    tau_threshold: float = DEFAULT_TAU_THRESHOLD
    n_bins: int = DEFAULT_BINS
    train_fraction: float = 0.7
    seed: int = 0
    baseline: bool = False
    transform_after_split: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MethodResult:
    method: str
    metrics: MetricsReport
    features: list
    w: Optional[int] = None
    a: Optional[int] = None

    def to_dict(self) -> dict:
        return {"method": self.method, "w": self.w, "a": self.a, "features": list(self.features), **self.metrics.to_dict()}


@dataclass
class PipelineResult:
    results: list[MethodResult]
    correlation: Optional[CorrelationReport]
    info: dict


def fit_model(model: ModelConfig, train: FeatureTable):
    if model.kind == "knn":
        return knn_fit(train.X, train.labels, model.k)
    if model.kind == "tree":
        return tree_fit(train.X, train.labels, model.max_depth, model.min_leaf)
    return forest_fit(train.X, train.labels, model.n_trees, model.max_depth, model.seed, min_leaf=model.min_leaf)


def fit_predict(model: ModelConfig, train: FeatureTable, test_X: np.ndarray) -> np.ndarray:
    return fit_model(model, train).predict(test_X)


def _evaluate(model: ModelConfig, train: FeatureTable, test: FeatureTable) -> MetricsReport:
    predicted = fit_predict(model, train, test.X)
    labels = np.unique(np.concatenate([train.labels, test.labels]))
    return metrics(confusion(test.labels, predicted, labels))


def run_pipeline(table: FeatureTable, config: PipelineConfig) -> PipelineResult:
    """Run the headline configuration, plus the raw-feature baseline when requested.

    Stages: rescaled-range transform of the whole ordered series (or of each
    split part with ``transform_after_split``), stratified split, correlation
    pruning fitted on the training part only, model fit, evaluation.
    """
    train_idx, test_idx = stratified_indices(table.labels, config.train_fraction, config.seed)
    if config.transform_after_split:
        train = apply_dsrr(table.take(train_idx), config.dsrr)
        test = apply_dsrr(table.take(test_idx), config.dsrr)
        partial = {"train": train.flags, "test": test.flags}
    else:
        transformed = apply_dsrr(table, config.dsrr)
        train, test = transformed.take(train_idx), transformed.take(test_idx)
        partial = transformed.flags

    name = config.model.kind + "+dsrr"
    report = None
    if config.prune:
        kept, report = prune_features(train, config.tau_threshold, n_bins=config.n_bins, phik_one=config.phik_one)
        if not kept:
            log.warning("correlation pruning removed every feature; keeping all")
            kept = list(range(train.n_features))
        train, test = train.select(kept), test.select(kept)
        name += "+corr"

    results = []
    if config.baseline:
        raw_train, raw_test = table.take(train_idx), table.take(test_idx)
        results.append(MethodResult(config.model.kind, _evaluate(config.model, raw_train, raw_test), list(table.feature_names)))
    results.append(
        MethodResult(name, _evaluate(config.model, train, test), list(train.feature_names), config.dsrr.w, config.dsrr.a)
    )

    info = {
        "n_rows": table.n_rows,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "dropped_input_rows": table.dropped_count,
        "class_counts": table.class_counts(),
        "dsrr_flags": partial,
    }
    return PipelineResult(results=results, correlation=report, info=info)
