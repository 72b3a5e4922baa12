"""Rescaled-range (R/S) kernels and the sliding rescaled-range derivative transform.

The transform maps a feature series to a series of the same length. The
sample axis is cut into consecutive blocks of ``w`` samples; inside each block
the R/S ratio is evaluated over the growing prefixes ``a, 2a, ...`` and the
first difference of that curve becomes the new feature value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import EstimationError, InputError, ParameterError

__all__ = [
    "DsrrConfig",
    "RsCurve",
    "HurstFit",
    "rescaled_range",
    "rs_curve",
    "differentiate",
    "dsrr_transform",
    "hurst_exponent",
]

ArrayLike = Union[Sequence[float], np.ndarray]

EDGE_POLICIES = ("shrink", "drop")
MODES = ("replace", "augment")


@dataclass(frozen=True)
class DsrrConfig:
    """Block size ``w``, prefix step ``a`` and handling of the trailing partial block."""

    w: int = 40
    a: int = 1
    edge_policy: str = "shrink"
    mode: str = "replace"

    def __post_init__(self) -> None:
        if int(self.w) != self.w or self.w < 2:
            raise ParameterError(f"block size w must be an integer >= 2, got {self.w!r}")
        if int(self.a) != self.a or not 1 <= self.a <= self.w:
            raise ParameterError(f"prefix step a must satisfy 1 <= a <= w, got a={self.a!r}, w={self.w}")
        if self.edge_policy not in EDGE_POLICIES:
            raise ParameterError(f"edge_policy must be one of {EDGE_POLICIES}, got {self.edge_policy!r}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class RsCurve:
    prefix_lengths: np.ndarray
    ratios: np.ndarray

    def __len__(self) -> int:
        return len(self.ratios)


@dataclass(frozen=True)
class HurstFit:
    """Least-squares fit of ``log(R/S) = log(c) + h * log(n)``."""

    h: float
    c: float
    r_squared: float
    points_used: int
    points_excluded: int = 0


def _as_series(values: ArrayLike) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        x = x.ravel()
    if x.size == 0:
        raise InputError("series must contain at least one sample")
    if not np.all(np.isfinite(x)):
        raise InputError("series contains NaN or infinite values")
    return x


def _prefix_lengths(length: int, a: int) -> np.ndarray:
    lengths = np.arange(a, length + 1, a)
    if lengths.size == 0 or lengths[-1] != length:
        lengths = np.append(lengths, length)
    return lengths


def _ratio_matrix(blocks: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """R/S of every row of ``blocks`` at each prefix length; shape (rows, len(lengths))."""
    out = np.zeros((blocks.shape[0], lengths.size))
    for j, n in enumerate(lengths):
        prefix = blocks[:, :n]
        dev = prefix - prefix.mean(axis=1, keepdims=True)
        z = np.cumsum(dev, axis=1)
        r = z.max(axis=1) - z.min(axis=1)
        s = np.sqrt(np.mean(dev * dev, axis=1))
        # a constant prefix has S = 0 mathematically even if the mean rounds
        live = (prefix.max(axis=1) != prefix.min(axis=1)) & (s > 0)
        out[live, j] = r[live] / s[live]
    return out


def rescaled_range(series: ArrayLike, n: int) -> float:
    """Rescaled range R(n)/S(n) of the first ``n`` samples.

    S is the population standard deviation. A prefix with zero spread
    (including ``n == 1``) yields 0.
    """
    x = _as_series(series)
    if int(n) != n or not 1 <= n <= x.size:
        raise ParameterError(f"prefix length n must satisfy 1 <= n <= {x.size}, got {n!r}")
    return float(_ratio_matrix(x[None, :], np.array([int(n)]))[0, 0])


def rs_curve(block: ArrayLike, a: int = 1) -> RsCurve:
    """R/S over prefixes ``a, 2a, ...``; a final point at the full block length is always present."""
    x = _as_series(block)
    if int(a) != a or not 1 <= a <= x.size:
        raise ParameterError(f"prefix step a must satisfy 1 <= a <= {x.size}, got {a!r}")
    lengths = _prefix_lengths(x.size, int(a))
    return RsCurve(prefix_lengths=lengths, ratios=_ratio_matrix(x[None, :], lengths)[0])


def _forward_difference(ratios: np.ndarray) -> np.ndarray:
    # works on the last axis; the final value is replicated to keep length
    if ratios.shape[-1] == 1:
        return np.zeros_like(ratios)
    d = np.diff(ratios, axis=-1)
    return np.concatenate([d, d[..., -1:]], axis=-1)


def differentiate(curve: Union[RsCurve, ArrayLike]) -> np.ndarray:
    """First-order forward difference of an R/S curve, same length as the curve."""
    ratios = curve.ratios if isinstance(curve, RsCurve) else curve
    return _forward_difference(_as_series(ratios))


def _transform_blocks(blocks: np.ndarray, a: int) -> np.ndarray:
    width = blocks.shape[1]
    lengths = _prefix_lengths(width, a)
    deriv = _forward_difference(_ratio_matrix(blocks, lengths))
    segments = np.diff(lengths, prepend=0)
    return np.repeat(deriv, segments, axis=1)


def dsrr_transform(feature: ArrayLike, config: DsrrConfig | None = None, *, return_flags: bool = False):
    """Block-wise R/S derivative of one feature series.

    Output has the same length as the input. With ``a > 1`` each derivative
    value is repeated across the ``a`` samples of its prefix segment.

    If ``return_flags`` is true a boolean mask is returned alongside the
    values, marking samples of a trailing partial block that were zeroed by
    ``edge_policy="drop"``.
    """
    config = config or DsrrConfig()
    x = _as_series(feature)
    n_full, rest = divmod(x.size, config.w)
    out = np.zeros(x.size)
    flags = np.zeros(x.size, dtype=bool)

    if n_full:
        blocks = x[: n_full * config.w].reshape(n_full, config.w)
        out[: n_full * config.w] = _transform_blocks(blocks, config.a).ravel()
    if rest:
        if config.edge_policy == "shrink":
            out[n_full * config.w :] = _transform_blocks(x[None, n_full * config.w :], config.a)[0]
        else:
            flags[n_full * config.w :] = True

    if return_flags:
        return out, flags
    return out


def hurst_exponent(series: ArrayLike, prefix_lengths: Sequence[int], *, tiled: bool = False) -> HurstFit:
    """Fit the Hurst exponent from R/S at the given prefix lengths.

    By default R(n)/S(n) is taken over the first ``n`` samples. With
    ``tiled=True`` it is averaged over all non-overlapping windows of length
    ``n``, the classical estimator. Points with R/S = 0 are left out of the
    fit and reported in ``points_excluded``.
    """
    x = _as_series(series)
    lengths = np.unique(np.asarray(prefix_lengths, dtype=int))
    if lengths.size and (lengths[0] < 2 or lengths[-1] > x.size):
        raise ParameterError(f"prefix lengths must lie in [2, {x.size}]")

    ratios = np.empty(lengths.size)
    for i, n in enumerate(lengths):
        if tiled:
            k = x.size // n
            ratios[i] = _ratio_matrix(x[: k * n].reshape(k, n), np.array([n]))[:, 0].mean()
        else:
            ratios[i] = _ratio_matrix(x[None, :n], np.array([n]))[0, 0]

    usable = ratios > 0
    if usable.sum() < 2:
        raise EstimationError(f"need at least 2 prefix lengths with nonzero R/S, got {int(usable.sum())}")

    log_n = np.log(lengths[usable])
    log_rs = np.log(ratios[usable])
    slope, intercept = np.polyfit(log_n, log_rs, 1)
    resid = log_rs - (slope * log_n + intercept)
    ss_tot = float(np.sum((log_rs - log_rs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return HurstFit(
        h=float(slope),
        c=float(np.exp(intercept)),
        r_squared=min(max(r2, 0.0), 1.0),
        points_used=int(usable.sum()),
        points_excluded=int((~usable).sum()),
    )
