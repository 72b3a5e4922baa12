"""Feature association analysis: Kendall tau-b, the Φ_k coefficient and redundancy pruning."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from ._bvn import cell_probabilities
from .errors import ConstantInputWarning, EstimationError, InputError, ParameterError

__all__ = [
    "ContingencyTable",
    "CorrelationReport",
    "kendall_tau",
    "quantile_bins",
    "contingency",
    "phik_from_counts",
    "phi_k",
    "correlation_report",
    "prune_features",
]

PHIK_ONE_TOL = 1e-9
DEFAULT_TAU_THRESHOLD = 0.87
DEFAULT_BINS = 10


# --------------------------------------------------------------------------
# Kendall tau-b
# --------------------------------------------------------------------------

def _count_inversions(v: np.ndarray) -> int:
    """Number of pairs i < j with v[i] > v[j] for non-negative integer codes.

    Bottom-up merge sort: at each level the right half of every block is
    counted against the (already sorted) left half with one global
    searchsorted, using ``block * K + value`` keys to keep blocks apart.
    """
    v = np.asarray(v, dtype=np.int64)
    n = v.size
    if n < 2:
        return 0
    k = int(v.max()) + 1
    idx = np.arange(n, dtype=np.int64)
    total = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        left = (idx % (2 * width)) < width
        keys = block * k + v
        left_keys = keys[left]
        rb, rv = block[~left], v[~left]
        hi = np.searchsorted(left_keys, rb * k + k, side="left")
        lo = np.searchsorted(left_keys, rb * k + rv, side="right")
        total += int((hi - lo).sum())
        v = np.sort(keys) - block * k
        width *= 2
    return total


def _tied_pairs(sorted_values: np.ndarray) -> int:
    _, counts = np.unique(sorted_values, return_counts=True)
    counts = counts.astype(object)
    return int(sum(c * (c - 1) // 2 for c in counts if c > 1))


def _joint_tied_pairs(xs: np.ndarray, ys: np.ndarray) -> int:
    # xs, ys already lexsorted by (x, y): equal pairs form consecutive runs
    change = np.flatnonzero((xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]))
    bounds = np.concatenate([[0], change + 1, [xs.size]])
    runs = np.diff(bounds)
    return int(sum(int(c) * (int(c) - 1) // 2 for c in runs if c > 1))


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputError("need at least 2 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("inputs contain NaN or infinite values")
    return x, y


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b in O(n log n).

    Equals the exhaustive pair count exactly: the integer pair statistics are
    identical and the final ratio is formed the same way. A constant argument
    gives 0 and a :class:`ConstantInputWarning`.
    """
    x, y = _as_pair(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(xs)
    n2 = _tied_pairs(np.sort(y))
    if n0 == n1 or n0 == n2:
        warnings.warn("Kendall tau of a constant column is undefined; reporting 0", ConstantInputWarning, stacklevel=2)
        return 0.0
    n3 = _joint_tied_pairs(xs, ys)
    _, y_codes = np.unique(ys, return_inverse=True)
    discordant = _count_inversions(y_codes)
    s = n0 - n1 - n2 + n3 - 2 * discordant
    return s / math.sqrt((n0 - n1) * (n0 - n2))


# --------------------------------------------------------------------------
# Φ_k
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _is_categorical(values: np.ndarray) -> bool:
    return values.dtype.kind not in "biuf"


def quantile_bins(x, n_bins: int = DEFAULT_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Assign each value to one of at most ``n_bins`` quantile bins.

    Bin edges are order statistics of ``x`` (no interpolation), so any
    strictly increasing transform of ``x`` yields the same assignment.
    Returns ``(codes, upper_edges)``; empty bins are removed.
    """
    if n_bins < 2:
        raise ParameterError(f"n_bins must be >= 2, got {n_bins}")
    x = np.asarray(x, dtype=float)
    inner = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)[1:-1], method="lower")
    edges = np.unique(inner)
    raw = np.searchsorted(edges, x, side="left")
    used, codes = np.unique(raw, return_inverse=True)
    upper = np.append(edges, np.inf)[used]
    return codes, upper


def _codes(values, n_bins: int) -> tuple[np.ndarray, tuple]:
    values = np.asarray(values)
    if _is_categorical(values):
        labels, codes = np.unique(values.astype(str), return_inverse=True)
        return codes, tuple(labels.tolist())
    codes, upper = quantile_bins(values, n_bins)
    return codes, tuple(float(u) for u in upper)


def contingency(x, y, n_bins: int = DEFAULT_BINS) -> ContingencyTable:
    """Cross-tabulate two variables; numeric ones are quantile-binned, others taken as categories."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise InputError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] == 0:
        raise InputError("need at least 1 sample")
    cx, lx = _codes(x, n_bins)
    cy, ly = _codes(y, n_bins)
    counts = np.zeros((len(lx), len(ly)), dtype=np.int64)
    np.add.at(counts, (cx, cy), 1)
    return ContingencyTable(counts=counts, row_labels=lx, col_labels=ly)


def _normal_edges(marginal: np.ndarray) -> np.ndarray:
    cum = np.cumsum(marginal)[:-1]
    return np.concatenate([[-np.inf], ndtri(np.clip(cum, 0.0, 1.0)), [np.inf]])


def phik_from_counts(counts) -> float:
    """Φ_k of a contingency table.

    The Pearson χ² is corrected for the independence pedestal (r-1)(k-1)
    with a linear rescaling that keeps the maximum χ² fixed, then matched
    against the χ² of a bivariate normal with correlation ρ discretized on a
    grid with the same marginal probabilities.
    """
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts.sum(axis=1) > 0][:, counts.sum(axis=0) > 0]
    r, k = counts.shape
    if r < 2 or k < 2:
        return 0.0
    n = counts.sum()
    pr = counts.sum(axis=1) / n
    pc = counts.sum(axis=0) / n
    indep = np.outer(pr, pc)
    chi2 = float(np.sum((counts - n * indep) ** 2 / (n * indep)))

    chi2_max = n * (min(r, k) - 1)
    if chi2 >= chi2_max * (1.0 - 1e-12):
        return 1.0
    pedestal = float((r - 1) * (k - 1))
    if chi2_max > pedestal:
        if chi2 <= pedestal:
            return 0.0
        target = chi2_max * (chi2 - pedestal) / (chi2_max - pedestal)
    else:
        target = chi2

    x_edges, y_edges = _normal_edges(pr), _normal_edges(pc)

    def excess(rho: float) -> float:
        p = cell_probabilities(x_edges, y_edges, rho)
        return float(n * np.sum((p - indep) ** 2 / indep)) - target

    if excess(1.0) <= 0:
        return 1.0
    if excess(0.0) >= 0:
        return 0.0
    try:
        rho = brentq(excess, 0.0, 1.0, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise EstimationError(f"Φ_k root-find did not converge: {exc}") from exc
    return float(min(max(rho, 0.0), 1.0))


def phi_k(x, y, n_bins: int = DEFAULT_BINS) -> float:
    """Φ_k association in [0, 1] between two variables.

    Numeric arrays are treated as interval variables and binned into
    ``n_bins`` quantile bins; string/object arrays are categorical.
    A constant variable gives 0 and a :class:`ConstantInputWarning`.
    """
    table = contingency(x, y, n_bins)
    if min(table.counts.shape) < 2:
        warnings.warn("Φ_k with a constant column is undefined; reporting 0", ConstantInputWarning, stacklevel=2)
        return 0.0
    return phik_from_counts(table.counts)


# --------------------------------------------------------------------------
# Reports and pruning
# --------------------------------------------------------------------------

@dataclass
class CorrelationReport:
    feature_names: list[str]
    phi_k: np.ndarray
    kendall_tau: np.ndarray
    target_association: np.ndarray
    constant_features: list[str] = field(default_factory=list)
    dropped: list[dict] = field(default_factory=list)
    kept: list[str] = field(default_factory=list)
    n_bins: int = DEFAULT_BINS
    tau_threshold: float = DEFAULT_TAU_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "features": list(self.feature_names),
            "n_bins": self.n_bins,
            "tau_threshold": self.tau_threshold,
            "phi_k": self.phi_k.tolist(),
            "kendall_tau": self.kendall_tau.tolist(),
            "target_association": {n: float(v) for n, v in zip(self.feature_names, self.target_association)},
            "constant_features": list(self.constant_features),
            "dropped": [dict(d) for d in self.dropped],
            "kept": list(self.kept),
        }


def correlation_report(
    X: np.ndarray,
    labels: Optional[Sequence] = None,
    feature_names: Optional[Sequence[str]] = None,
    n_bins: int = DEFAULT_BINS,
) -> CorrelationReport:
    """Pairwise Φ_k and Kendall tau matrices plus each feature's Φ_k with the labels."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError("feature matrix must be 2-D")
    n_features = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(n_features)]
    constant = [bool(np.all(X[:, j] == X[0, j])) for j in range(n_features)]

    phik_m = np.zeros((n_features, n_features))
    tau_m = np.zeros((n_features, n_features))
    assoc = np.zeros(n_features)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantInputWarning)
        for i in range(n_features):
            if not constant[i]:
                phik_m[i, i] = tau_m[i, i] = 1.0
                if labels is not None:
                    assoc[i] = phi_k(X[:, i], np.asarray(labels).astype(str), n_bins)
            for j in range(i + 1, n_features):
                if constant[i] or constant[j]:
                    continue
                phik_m[i, j] = phik_m[j, i] = phi_k(X[:, i], X[:, j], n_bins)
                tau_m[i, j] = tau_m[j, i] = kendall_tau(X[:, i], X[:, j])

    return CorrelationReport(
        feature_names=names,
        phi_k=phik_m,
        kendall_tau=tau_m,
        target_association=assoc,
        constant_features=[n for n, c in zip(names, constant) if c],
        n_bins=n_bins,
    )


def prune_features(
    table,
    tau_threshold: float = DEFAULT_TAU_THRESHOLD,
    *,
    n_bins: int = DEFAULT_BINS,
    phik_one: bool = True,
) -> tuple[list[int], CorrelationReport]:
    """Drop redundant features from a :class:`~dsrr.dataset.FeatureTable`.

    Constant columns go first. Then every pair with Φ_k = 1 (if
    ``phik_one``), then every pair with ``|tau| > tau_threshold``, visited in
    ascending column order. Of each offending pair the feature with the
    lower Φ_k association to the labels is dropped; on a tie the higher
    column index goes.
    """
    report = correlation_report(table.X, table.labels, table.feature_names, n_bins)
    report.tau_threshold = float(tau_threshold)
    names = report.feature_names
    n_features = len(names)
    alive = np.ones(n_features, dtype=bool)

    def drop(idx: int, reason: str, partner: Optional[int] = None) -> None:
        alive[idx] = False
        entry = {"feature": names[idx], "index": idx, "reason": reason}
        if partner is not None:
            entry["partner"] = names[partner]
        report.dropped.append(entry)

    for j, name in enumerate(names):
        if name in report.constant_features:
            drop(j, "constant")

    stages = []
    if phik_one:
        stages.append(("phik_one", lambda i, j: report.phi_k[i, j] >= 1.0 - PHIK_ONE_TOL))
    stages.append(("tau_threshold", lambda i, j: abs(report.kendall_tau[i, j]) > tau_threshold))

    assoc = report.target_association
    for reason, violates in stages:
        for i in range(n_features):
            for j in range(i + 1, n_features):
                if not (alive[i] and alive[j]) or not violates(i, j):
                    continue
                if assoc[i] < assoc[j]:
                    drop(i, reason, j)
                else:
                    drop(j, reason, i)

    kept = [j for j in range(n_features) if alive[j]]
    report.kept = [names[j] for j in kept]
    return kept, report
