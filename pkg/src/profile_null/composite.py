"""Correlation-weighted composite scores and threshold flagging.

Per-measure standardized scores are sign-aligned so that lower always means
worse care, combined as a weighted sum, and normalized by the quadratic form
of the weights in the score correlation matrix so the composite is standard
normal under the null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .measures import MeasureSpec, ZScore

WEIGHT_SCHEMES = ("inverse_corr_sum", "capped_corr_reciprocal", "user_supplied")
LABELS = ("poor", "average", "good")

MIN_PAIR_COMPLETE = 3
COND_LIMIT = 1e12


@dataclass(frozen=True)
class CompositeConfig:
    weight_scheme: str = "capped_corr_reciprocal"
    user_weights: tuple[float, ...] | None = None
    flag_lower: float = -1.96
    flag_upper: float = 1.96

    def __post_init__(self) -> None:
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise InputError(f"unknown weight scheme {self.weight_scheme!r}; "
                             f"expected one of {WEIGHT_SCHEMES}")
        if (self.user_weights is not None) != (self.weight_scheme == "user_supplied"):
            raise InputError("user_weights must be given exactly when "
                             "weight_scheme='user_supplied'")
        if self.user_weights is not None and any(w <= 0 for w in self.user_weights):
            raise InputError("user weights must all be positive")
        if not self.flag_lower < self.flag_upper:
            raise InputError("flag_lower must be below flag_upper")


@dataclass(frozen=True)
class CompositeResult:
    """Composite score, flag label, and the weights/correlations behind it
    for one center. ``partial`` marks composites computed from a strict
    subset of the declared measures."""

    center_id: str
    z_cs: float
    label: str
    weights: tuple[float, ...]
    correlation: np.ndarray
    measures_used: tuple[str, ...]
    partial: bool = False


def direction_align(z: ZScore, spec: MeasureSpec) -> float:
    """Return the score oriented so that lower means worse quality of care."""
    if spec.direction == "higher_is_better":
        return z.value
    return -z.value


def correlation_matrix(
    scores: np.ndarray,
    measure_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """Pairwise-complete Pearson correlations of a centers x measures table.

    Missing entries are NaN; each measure pair needs at least 3 centers with
    both scores present. The diagonal is exactly 1.
    """
    mat = np.asarray(scores, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] < 1:
        raise InputError("scores must be a 2-d centers x measures array")
    p = mat.shape[1]
    names = list(measure_ids) if measure_ids is not None else [str(k) for k in range(p)]
    corr = np.eye(p)
    for k in range(p):
        for l in range(k + 1, p):
            both = np.isfinite(mat[:, k]) & np.isfinite(mat[:, l])
            if both.sum() < MIN_PAIR_COMPLETE:
                raise InputError(
                    f"measures {names[k]!r} and {names[l]!r} share only "
                    f"{int(both.sum())} complete centers; need at least "
                    f"{MIN_PAIR_COMPLETE}")
            xk = mat[both, k]
            xl = mat[both, l]
            c = np.corrcoef(xk, xl)[0, 1]
            if not np.isfinite(c):
                raise InputError(f"correlation between {names[k]!r} and "
                                 f"{names[l]!r} is undefined (constant scores)")
            corr[k, l] = corr[l, k] = min(1.0, max(-1.0, float(c)))
    return corr


def _validate_corr(corr: np.ndarray) -> np.ndarray:
    c = np.asarray(corr, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError("correlation matrix must be square")
    if not np.allclose(np.diag(c), 1.0, atol=1e-12):
        raise InputError("correlation matrix must have a unit diagonal")
    if not np.allclose(c, c.T, atol=1e-10):
        raise InputError("correlation matrix must be symmetric")
    return c


def capped_corr_weights(corr: np.ndarray) -> np.ndarray:
    """Inversion-free weights w_k = 1 / sum_l max(c_kl, 0).

    Strictly positive for every valid correlation matrix because the unit
    diagonal puts at least 1 in each denominator.
    """
    c = _validate_corr(corr)
    return 1.0 / np.sum(np.maximum(c, 0.0), axis=1)


def inverse_corr_weights(corr: np.ndarray) -> np.ndarray:
    """Row sums of the inverse correlation matrix. May be negative for some
    correlation structures, which is why the capped variant is the default.
    """
    c = _validate_corr(corr)
    cond = np.linalg.cond(c)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise InputError(f"correlation matrix is singular or near-singular "
                         f"(condition estimate {cond:.3e})")
    return np.sum(np.linalg.inv(c), axis=1)


def composite_score(
    z_row: Sequence[float],
    w: Sequence[float],
    corr: np.ndarray,
) -> float:
    """Correlation-normalized weighted sum:
    (sum_kl w_k w_l c_kl)^(-1/2) * sum_k w_k z_k."""
    z = np.asarray(z_row, dtype=np.float64)
    wv = np.asarray(w, dtype=np.float64)
    c = _validate_corr(corr)
    if not (z.shape == wv.shape and z.shape[0] == c.shape[0]):
        raise InputError("z_row, w, and corr dimensions must agree")
    quad = float(wv @ c @ wv)
    if quad <= 0:
        raise InputError(f"weight quadratic form must be positive, got {quad:.6g}")
    return float(wv @ z) / math.sqrt(quad)


def published_weights(w: Sequence[float], corr: np.ndarray) -> np.ndarray:
    """Weights folded with the composite normalizing constant,
    w_k / sqrt(sum_kl w_k w_l c_kl): the reporting convention that
    reproduces the published composite weight tables."""
    wv = np.asarray(w, dtype=np.float64)
    c = _validate_corr(corr)
    quad = float(wv @ c @ wv)
    if quad <= 0:
        raise InputError(f"weight quadratic form must be positive, got {quad:.6g}")
    return wv / math.sqrt(quad)


def flag(z_cs: float, config: CompositeConfig | None = None) -> str:
    """Classify a composite score against the flag thresholds; boundary
    values count as average."""
    cfg = config if config is not None else CompositeConfig()
    if z_cs < cfg.flag_lower:
        return "poor"
    if z_cs > cfg.flag_upper:
        return "good"
    return "average"


def weights_for(corr: np.ndarray, config: CompositeConfig) -> np.ndarray:
    if config.weight_scheme == "capped_corr_reciprocal":
        return capped_corr_weights(corr)
    if config.weight_scheme == "inverse_corr_sum":
        return inverse_corr_weights(corr)
    w = np.asarray(config.user_weights, dtype=np.float64)
    if w.shape[0] != corr.shape[0]:
        raise InputError(f"user_weights has {w.shape[0]} entries for "
                         f"{corr.shape[0]} measures")
    return w


def composite_table(
    center_ids: Sequence[str],
    aligned: np.ndarray,
    measure_ids: Sequence[str],
    config: CompositeConfig | None = None,
) -> tuple[list[CompositeResult], list[str]]:
    """Composite scores for a centers x measures table of aligned scores.

    Weights and correlations come from the full table. Centers missing some
    measures are scored on the matching sub-blocks of the weights and
    correlation matrix and marked partial; centers with fewer than 2
    available measures are skipped and their ids returned separately.
    """
    cfg = config if config is not None else CompositeConfig()
    mat = np.asarray(aligned, dtype=np.float64)
    ids = list(center_ids)
    names = tuple(measure_ids)
    if mat.ndim != 2 or mat.shape[0] != len(ids) or mat.shape[1] != len(names):
        raise InputError("aligned table shape must match center and measure ids")
    corr = correlation_matrix(mat, names)
    w = weights_for(corr, cfg)

    results: list[CompositeResult] = []
    skipped: list[str] = []
    for i, cid in enumerate(ids):
        avail = np.isfinite(mat[i])
        n_avail = int(avail.sum())
        if n_avail < 2 and len(names) > 1:
            skipped.append(cid)
            continue
        idx = np.flatnonzero(avail)
        sub_corr = corr[np.ix_(idx, idx)]
        sub_w = w[idx]
        z_cs = composite_score(mat[i, idx], sub_w, sub_corr)
        results.append(CompositeResult(
            center_id=cid,
            z_cs=z_cs,
            label=flag(z_cs, cfg),
            weights=tuple(float(x) for x in sub_w),
            correlation=corr,
            measures_used=tuple(names[j] for j in idx),
            partial=n_avail < len(names),
        ))
    return results, skipped
