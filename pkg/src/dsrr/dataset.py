"""Flow-feature tables: CSV ingestion, stratified splitting and synthetic data.

Row order is the time axis for the rescaled-range transform: a timestamp
column sorts the rows when present, otherwise file order is kept.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import DataError, ParameterError, SchemaError, SplitError
from .rescaled_range import DsrrConfig, dsrr_transform

__all__ = [
    "ISCX_FEATURES",
    "ISCX_LABEL",
    "DEFAULT_LABEL_ALIASES",
    "FeatureSchema",
    "FeatureTable",
    "normalize_label",
    "load_flow_csv",
    "write_csv",
    "stratified_indices",
    "stratified_split",
    "apply_dsrr",
    "RegimeParams",
    "SynthConfig",
    "synth_generate",
]

log = logging.getLogger(__name__)

# column names as distributed in the ISCXVPN2016 time-based feature files
ISCX_FEATURES = (
    "duration",
    "total_fiat",
    "total_biat",
    "min_fiat",
    "min_biat",
    "max_fiat",
    "max_biat",
    "mean_fiat",
    "mean_biat",
    "flowPktsPerSecond",
    "flowBytesPerSecond",
    "min_flowiat",
    "max_flowiat",
    "mean_flowiat",
    "std_flowiat",
    "min_active",
    "mean_active",
    "max_active",
    "std_active",
    "min_idle",
    "mean_idle",
    "max_idle",
    "std_idle",
)
ISCX_LABEL = "class1"

# keys are lower-cased; a trailing "*" matches by prefix
DEFAULT_LABEL_ALIASES: Mapping[str, str] = {"vpn": "VPN", "non*": "NonVPN"}


@dataclass(frozen=True)
class FeatureSchema:
    """Which CSV columns to read. ``features=None`` takes every other column."""

    features: Optional[tuple[str, ...]] = ISCX_FEATURES
    label: str = ISCX_LABEL
    timestamp: Optional[str] = None

    def __post_init__(self) -> None:
        if self.features is not None:
            if len(set(self.features)) != len(self.features):
                raise SchemaError("feature names must be unique")
            if self.label in self.features:
                raise SchemaError(f"label column {self.label!r} is also listed as a feature")

    @classmethod
    def auto(cls, label: str = ISCX_LABEL, timestamp: Optional[str] = None) -> "FeatureSchema":
        return cls(features=None, label=label, timestamp=timestamp)


@dataclass
class FeatureTable:
    X: np.ndarray
    feature_names: list[str]
    labels: np.ndarray
    timestamps: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None
    row_index: Optional[np.ndarray] = None
    label_name: str = ISCX_LABEL
    timestamp_name: Optional[str] = None
    dropped_count: int = 0
    flags: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DataError(f"matrix shape {self.X.shape} does not match {len(self.feature_names)} feature names")
        if self.labels.shape[0] != self.X.shape[0]:
            raise DataError(f"{self.X.shape[0]} rows but {self.labels.shape[0]} labels")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        pick = lambda a: None if a is None else a[rows]  # noqa: E731
        return replace(
            self,
            X=self.X[rows],
            labels=self.labels[rows],
            timestamps=pick(self.timestamps),
            source=pick(self.source),
            row_index=pick(self.row_index),
            flags=dict(self.flags),
        )

    def select(self, columns: Sequence[int]) -> "FeatureTable":
        columns = list(columns)
        return replace(self, X=self.X[:, columns], feature_names=[self.feature_names[j] for j in columns])

    def class_counts(self) -> dict:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {str(c): int(n) for c, n in zip(classes, counts)}


def normalize_label(raw: str, aliases: Optional[Mapping[str, str]] = None) -> str:
    """Map a raw label to its canonical class name, case-insensitively.

    Labels matching no alias are returned stripped but otherwise unchanged.
    """
    aliases = DEFAULT_LABEL_ALIASES if aliases is None else aliases
    key = raw.strip().lower()
    for pattern, canonical in aliases.items():
        pattern = pattern.lower()
        if pattern.endswith("*"):
            if key.startswith(pattern[:-1]):
                return canonical
        elif key == pattern:
            return canonical
    return raw.strip()


def _data_lines(handle):
    for line in handle:
        if not line.lstrip().startswith("#"):
            yield line


def load_flow_csv(
    path: Union[str, Path],
    schema: Optional[FeatureSchema] = None,
    *,
    label_aliases: Optional[Mapping[str, str]] = None,
) -> FeatureTable:
    """Read a flow-feature CSV into a :class:`FeatureTable`.

    Rows with missing, unparseable or non-finite values in any declared
    column are dropped; their number is kept in ``dropped_count``. Lines
    starting with ``#`` are ignored.
    """
    schema = schema or FeatureSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(_data_lines(handle))
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if schema.features is None:
            features = [h for h in header if h not in (schema.label, schema.timestamp)]
        else:
            features = list(schema.features)
        wanted = features + [schema.label] + ([schema.timestamp] if schema.timestamp else [])
        missing = [c for c in wanted if c not in header]
        if missing and not (schema.timestamp and missing == [schema.timestamp]):
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        has_time = bool(schema.timestamp) and schema.timestamp in header
        f_pos = [header.index(c) for c in features]
        l_pos = header.index(schema.label)
        t_pos = header.index(schema.timestamp) if has_time else None

        rows, labels, times, origin = [], [], [], []
        dropped = 0
        for i, record in enumerate(reader):
            if not record or all(not c.strip() for c in record):
                continue
            try:
                values = [float(record[p]) for p in f_pos]
                stamp = float(record[t_pos]) if has_time else None
                label = record[l_pos]
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in values) or (has_time and not math.isfinite(stamp)):
                dropped += 1
                continue
            rows.append(values)
            labels.append(normalize_label(label, label_aliases))
            times.append(stamp)
            origin.append(i)

    if not rows:
        raise DataError(f"{path}: no usable rows ({dropped} dropped)")
    if dropped:
        log.info("%s: dropped %d row(s) with missing or non-finite values", path, dropped)

    table = FeatureTable(
        X=np.array(rows, dtype=float).reshape(len(rows), len(features)),
        feature_names=features,
        labels=np.array(labels, dtype=object).astype(str),
        timestamps=np.array(times, dtype=float) if has_time else None,
        source=np.full(len(rows), str(path), dtype=object),
        row_index=np.array(origin),
        label_name=schema.label,
        timestamp_name=schema.timestamp if has_time else None,
        dropped_count=dropped,
    )
    if has_time:
        table = table.take(np.argsort(table.timestamps, kind="stable"))
    return table


def concat_tables(tables: Sequence[FeatureTable]) -> FeatureTable:
    first = tables[0]
    for t in tables[1:]:
        if t.feature_names != first.feature_names:
            raise SchemaError("input files have different feature columns")
    times = None
    if all(t.timestamps is not None for t in tables):
        times = np.concatenate([t.timestamps for t in tables])
    joined = FeatureTable(
        X=np.vstack([t.X for t in tables]),
        feature_names=list(first.feature_names),
        labels=np.concatenate([t.labels for t in tables]),
        timestamps=times,
        source=np.concatenate([t.source if t.source is not None else np.full(t.n_rows, "") for t in tables]),
        row_index=np.concatenate([t.row_index if t.row_index is not None else np.arange(t.n_rows) for t in tables]),
        label_name=first.label_name,
        timestamp_name=first.timestamp_name if times is not None else None,
        dropped_count=sum(t.dropped_count for t in tables),
    )
    if times is not None:
        joined = joined.take(np.argsort(times, kind="stable"))
    return joined


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(table: FeatureTable, path: Union[str, Path], comment: Optional[str] = None) -> None:
    """Write a table in the input dialect; ``comment`` becomes a leading ``# `` line."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        if comment:
            handle.write(f"# {comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        header = list(table.feature_names) + [table.label_name]
        if table.timestamps is not None:
            header.append(table.timestamp_name or "timestamp")
        writer.writerow(header)
        for i in range(table.n_rows):
            row = [_fmt(v) for v in table.X[i]] + [str(table.labels[i])]
            if table.timestamps is not None:
                row.append(_fmt(table.timestamps[i]))
            writer.writerow(row)


def stratified_indices(labels, train_fraction: float = 0.7, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of a per-class shuffled split, each part in original order.

    Each class contributes ``round(count * train_fraction)`` rows to the
    training part (half rounds up), clamped so both parts keep at least one.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction!r}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise SplitError(f"class {cls!r} has {members.size} row(s); need at least 2")
        n_train = int(math.floor(members.size * train_fraction + 0.5))
        n_train = min(max(n_train, 1), members.size - 1)
        train.append(rng.permutation(members)[:n_train])
    train_idx = np.sort(np.concatenate(train)) if train else np.array([], dtype=int)
    mask = np.zeros(labels.shape[0], dtype=bool)
    mask[train_idx] = True
    return train_idx, np.flatnonzero(~mask)


def stratified_split(table: FeatureTable, train_fraction: float = 0.7, seed: int = 0) -> tuple[FeatureTable, FeatureTable]:
    train_idx, test_idx = stratified_indices(table.labels, train_fraction, seed)
    return table.take(train_idx), table.take(test_idx)


def apply_dsrr(table: FeatureTable, config: Optional[DsrrConfig] = None) -> FeatureTable:
    """Transform every feature column; ``mode="augment"`` keeps the originals alongside.

    The returned table's ``flags["partial_rows"]`` counts trailing rows that
    form an incomplete block, and ``flags["dropped_rows"]`` those zeroed by
    ``edge_policy="drop"``.
    """
    config = config or DsrrConfig()
    out = np.empty_like(table.X)
    zeroed = np.zeros(table.n_rows, dtype=bool)
    for j in range(table.n_features):
        out[:, j], zeroed = dsrr_transform(table.X[:, j], config, return_flags=True)
    if config.mode == "augment":
        X = np.hstack([table.X, out])
        names = list(table.feature_names) + [f"{n}_dsrr" for n in table.feature_names]
    else:
        X, names = out, list(table.feature_names)
    flags = dict(table.flags)
    flags["partial_rows"] = int(table.n_rows % config.w)
    flags["dropped_rows"] = int(zeroed.sum())
    return replace(table, X=X, feature_names=names, flags=flags)


# --------------------------------------------------------------------------
# Synthetic regime-switch data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeParams:
    """Per-class generator settings: noise level and variance, burst added at block start."""

    level: float = 0.0
    variance: float = 1.0
    burst: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    n_blocks: int = 40
    block_len: int = 50
    n_features: int = 4
    stationary: RegimeParams = RegimeParams()
    bursty: RegimeParams = RegimeParams(burst=10.0)
    burst_len: int = 1
    labels: tuple[str, str] = ("NonVPN", "VPN")
    seed: int = 7

    def __post_init__(self) -> None:
        if self.block_len < 2:
            raise ParameterError("block_len must be >= 2")
        if self.n_blocks < 1 or self.n_features < 1:
            raise ParameterError("n_blocks and n_features must be >= 1")
        if self.stationary.variance < 0 or self.bursty.variance < 0:
            raise ParameterError("variances must be >= 0")
        if not 1 <= self.burst_len <= self.block_len:
            raise ParameterError("burst_len must lie in [1, block_len]")


def synth_generate(config: Optional[SynthConfig] = None) -> FeatureTable:
    """Alternating blocks of stationary noise (even blocks) and bursty noise (odd blocks).

    Every feature of a bursty block is shifted by ``burst`` over its first
    ``burst_len`` samples. Timestamps are the sample index in seconds.
    """
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_blocks * cfg.block_len
    X = np.empty((n, cfg.n_features))
    labels = np.empty(n, dtype=object)
    for b in range(cfg.n_blocks):
        regime = cfg.bursty if b % 2 else cfg.stationary
        rows = slice(b * cfg.block_len, (b + 1) * cfg.block_len)
        noise = rng.standard_normal((cfg.block_len, cfg.n_features))
        block = regime.level + math.sqrt(regime.variance) * noise
        block[: cfg.burst_len] += regime.burst
        X[rows] = block
        labels[rows] = cfg.labels[b % 2]
    return FeatureTable(
        X=X,
        feature_names=[f"x{j}" for j in range(cfg.n_features)],
        labels=labels.astype(str),
        timestamps=np.arange(n, dtype=float),
        source=np.full(n, "synthetic", dtype=object),
        row_index=np.arange(n),
        label_name="label",
        timestamp_name="timestamp",
    )
