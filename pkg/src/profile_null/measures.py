"""Measure/center data model, naive fixed-effects Z-scores, and size-group
diagnostics computed from center-level summary statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .empirical_null import EnConfig
from .errors import InputError

FAMILIES = ("normal", "binomial", "poisson")
DIRECTIONS = ("higher_is_better", "lower_is_better")
METHODS = ("fixed_effects", "empirical_null", "method_of_moments")

FLAG_Z = 1.96


@dataclass(frozen=True)
class MeasureSpec:
    """Outcome family, dispersion constant, care direction, and empirical-null
    tuning for one quality measure.

    ``a_psi`` is the exponential-family dispersion constant: the error
    variance for normal outcomes and exactly 1 for binomial/poisson.
    """

    measure_id: str
    family: str
    direction: str
    a_psi: float = 1.0
    en_config: EnConfig = field(default_factory=EnConfig)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r} for measure "
                             f"{self.measure_id!r}; expected one of {FAMILIES}")
        if self.direction not in DIRECTIONS:
            raise InputError(f"unknown direction {self.direction!r} for measure "
                             f"{self.measure_id!r}; expected one of {DIRECTIONS}")
        if not (self.a_psi > 0 and np.isfinite(self.a_psi)):
            raise InputError(f"a_psi must be a positive finite number, got "
                             f"{self.a_psi!r}")
        if self.family in ("binomial", "poisson") and self.a_psi != 1.0:
            raise InputError(f"a_psi must equal 1 for {self.family} measures "
                             f"(measure {self.measure_id!r})")


@dataclass(frozen=True)
class CenterStat:
    """One center's summary statistics for one measure: observed event sum,
    model-expected sum, and effective size (summed conditional variance of
    the outcome under the null, which equals the expected count for poisson).
    """

    center_id: str
    measure_id: str
    observed: float
    expected: float
    effective_size: float

    def __post_init__(self) -> None:
        for name in ("observed", "expected", "effective_size"):
            if not np.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite for center "
                                 f"{self.center_id!r}/{self.measure_id!r}")


@dataclass(frozen=True)
class ZScore:
    center_id: str
    measure_id: str
    method: str
    value: float


def z_fixed_effects(stat: CenterStat, spec: MeasureSpec) -> ZScore:
    """Naive standardized score (observed - expected) / sqrt(a_psi * size).

    Raises InputError for non-positive effective size; callers exclude such
    centers and record them in a skipped-centers diagnostic.
    """
    if stat.effective_size <= 0:
        raise InputError(f"effective_size must be positive for center "
                         f"{stat.center_id!r}/{stat.measure_id!r}, got "
                         f"{stat.effective_size}")
    value = (stat.observed - stat.expected) / np.sqrt(spec.a_psi * stat.effective_size)
    return ZScore(center_id=stat.center_id, measure_id=stat.measure_id,
                  method="fixed_effects", value=float(value))


def measure_ratio(stat: CenterStat) -> float:
    """Observed-over-expected ratio, the published measure scale."""
    if stat.expected <= 0:
        raise InputError(f"expected must be positive for center "
                         f"{stat.center_id!r}/{stat.measure_id!r}, got "
                         f"{stat.expected}")
    return stat.observed / stat.expected


def group_variance_diagnostic(
    z: Sequence[float] | Sequence[ZScore],
    sizes: Sequence[float],
    n_groups: int,
    flag_z: float = FLAG_Z,
) -> list[tuple[float, float, float]]:
    """Size-grouped Z-score dispersion diagnostic.

    Centers are sorted by effective size and split into ``n_groups``
    contiguous groups of near-equal count. Returns, per group, the mean
    effective size, the sample variance of the Z-scores, and the proportion
    of centers with ``|z| > flag_z``. When risk adjustment is complete all
    group variances sit near 1; variances that grow with size indicate
    overdispersion from unobserved confounding.
    """
    zvals = np.asarray(
        [zi.value if isinstance(zi, ZScore) else zi for zi in z], dtype=np.float64
    )
    svals = np.asarray(sizes, dtype=np.float64)
    if zvals.shape != svals.shape or zvals.ndim != 1:
        raise InputError("z and sizes must be equal-length 1-d sequences")
    if n_groups < 2:
        raise InputError("n_groups must be at least 2")
    if zvals.size < 2 * n_groups:
        raise InputError(f"need at least 2 centers per group: "
                         f"{zvals.size} centers for {n_groups} groups")
    order = np.argsort(svals, kind="stable")
    out = []
    for idx in np.array_split(order, n_groups):
        gz = zvals[idx]
        out.append((
            float(np.mean(svals[idx])),
            float(np.var(gz, ddof=1)),
            float(np.mean(np.abs(gz) > flag_z)),
        ))
    return out
