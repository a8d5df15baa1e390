"""Individualized empirical null: truncated-normal maximum likelihood for the
overdispersion parameter phi and the null proportion pi0, size-dependent
corrected Z-scores, and funnel-plot control limits.

Model: under the null, a center's fixed-effects Z-score is N(0, 1 + phi*n)
where n is the effective center size. The non-null density is unspecified
but supported outside a per-center interval [-B_i, B_i], which makes
(phi, pi0) identifiable from center-level statistics alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConvergenceError, FittingError, InputError
from .numerics import nelder_mead_minimize, robust_intercept_scale, std_normal_quantile

MIN_CENTERS = 10
MIN_NULL_SET = 3


@dataclass(frozen=True)
class EnConfig:
    """Tuning parameters for the empirical-null fit.

    ``q_percent`` sets the truncation constant v to the (100 - q)th standard
    normal percentile. The pi0 grid spans the profile-likelihood search.
    """

    q_percent: float = 5.0
    pi0_grid_lo: float = 0.80
    pi0_grid_hi: float = 1.00
    pi0_grid_step: float = 0.005
    optimizer_tol: float = 1e-8
    max_iter: int = 500

    def __post_init__(self) -> None:
        if not (0.0 < self.q_percent < 50.0):
            raise InputError(f"q_percent must lie in (0, 50), got {self.q_percent}")
        if not (0.0 < self.pi0_grid_lo <= self.pi0_grid_hi <= 1.0):
            raise InputError("pi0 grid must satisfy 0 < lo <= hi <= 1")
        if self.pi0_grid_step <= 0.0:
            raise InputError("pi0_grid_step must be positive")
        if self.optimizer_tol <= 0.0 or self.max_iter < 1:
            raise InputError("optimizer_tol must be positive and max_iter >= 1")

    def pi0_grid(self) -> np.ndarray:
        n = int(round((self.pi0_grid_hi - self.pi0_grid_lo) / self.pi0_grid_step))
        grid = self.pi0_grid_lo + self.pi0_grid_step * np.arange(n + 1)
        return np.clip(grid, self.pi0_grid_lo, self.pi0_grid_hi)


@dataclass(frozen=True)
class NullFit:
    """Fitted empirical-null parameters for one measure.

    ``interval_bounds`` holds the per-center (A_i, B_i) truncation interval
    and ``null_set`` the per-center membership flags; both are computed from
    the initial overdispersion estimate and held fixed during optimization.
    ``sigma2_alpha_hat`` is the implied confounder-effect variance
    phi_hat * a_psi.
    """

    measure_id: str
    phi_hat: float
    pi0_hat: float
    phi_init: float
    v: float
    interval_bounds: np.ndarray
    null_set: np.ndarray
    loglik: float
    sigma2_alpha_hat: float

    @property
    def n_null_set(self) -> int:
        return int(np.sum(self.null_set))


def initial_phi(z: Sequence[float], sizes: Sequence[float]) -> float:
    """Initial overdispersion estimate from the robust residual scale s:
    max(0, (s^2 - 1) / mean(sizes)), matching E[Z^2] = 1 + phi*n at the
    average size.
    """
    zarr = np.asarray(z, dtype=np.float64)
    sarr = np.asarray(sizes, dtype=np.float64)
    if zarr.shape != sarr.shape:
        raise InputError("z and sizes must have equal length")
    s = robust_intercept_scale(zarr).scale
    return max(0.0, (s * s - 1.0) / float(np.mean(sarr)))


def truncation_bounds(phi_init: float, v: float, size: float) -> tuple[float, float]:
    """Symmetric interval (-B, B) with B = v * sqrt(1 + phi_init * size)."""
    b = v * math.sqrt(1.0 + phi_init * size)
    return (-b, b)


def null_loglik(
    phi: float,
    pi0: float,
    z: Sequence[float],
    sizes: Sequence[float],
    null_set: Sequence[bool],
    bounds: Sequence[tuple[float, float]],
) -> float:
    """Truncated-mixture log-likelihood at (phi, pi0).

    In-interval centers contribute log(pi0 * N(0, 1 + phi*n) density);
    out-of-interval centers contribute log(1 - pi0 * Q_i(phi)) where Q_i is
    the null probability of the interval. Returns -inf instead of raising
    when a log argument is non-positive.
    """
    if phi < 0:
        raise InputError(f"phi must be nonnegative, got {phi}")
    if not (0.0 < pi0 <= 1.0):
        raise InputError(f"pi0 must lie in (0, 1], got {pi0}")
    zarr = np.ascontiguousarray(z, dtype=np.float64)
    sarr = np.ascontiguousarray(sizes, dtype=np.float64)
    mask = np.ascontiguousarray(null_set, dtype=np.bool_)
    barr = np.ascontiguousarray([b for (_, b) in bounds], dtype=np.float64)
    if not (zarr.shape == sarr.shape == mask.shape == barr.shape):
        raise InputError("z, sizes, null_set, and bounds must have equal length")
    return float(_kernels.null_loglik_core(phi, pi0, zarr, sarr, mask, barr))


def fit_empirical_null(
    z: Sequence[float],
    sizes: Sequence[float],
    config: EnConfig | None = None,
    a_psi: float = 1.0,
    measure_id: str = "",
) -> NullFit:
    """Profile-likelihood fit of (phi, pi0) for one measure.

    Pipeline: robust initial phi -> truncation interval and null-set
    membership (fixed thereafter) -> for each pi0 on the grid, maximize the
    log-likelihood over phi >= 0 with Nelder-Mead on u = log(phi + eps) ->
    keep the grid point with the largest profile likelihood, breaking ties
    toward the larger pi0.
    """
    cfg = config if config is not None else EnConfig()
    zarr = np.ascontiguousarray(z, dtype=np.float64)
    sarr = np.ascontiguousarray(sizes, dtype=np.float64)
    if zarr.ndim != 1 or zarr.shape != sarr.shape:
        raise InputError("z and sizes must be equal-length 1-d sequences")
    if zarr.size < MIN_CENTERS:
        raise FittingError(f"empirical-null fit needs at least {MIN_CENTERS} "
                           f"centers, got {zarr.size}")
    if not np.all(np.isfinite(zarr)):
        raise InputError("z contains non-finite values")
    if not np.all(sarr > 0):
        raise InputError("sizes must be positive")

    phi_init = initial_phi(zarr, sarr)
    v = std_normal_quantile(1.0 - cfg.q_percent / 100.0)
    b_upper = v * np.sqrt(1.0 + phi_init * sarr)
    null_set = np.abs(zarr) <= b_upper
    n_null = int(np.sum(null_set))
    if n_null < MIN_NULL_SET:
        raise FittingError(f"degenerate null set: only {n_null} of {zarr.size} "
                           f"centers fall inside the truncation interval")

    u_init = math.log(phi_init + _kernels.EPS_PHI)
    best_ll = -math.inf
    best_u = u_init
    best_pi0 = float("nan")
    any_converged = False
    neg_loglik_u = _kernels.neg_null_loglik_u
    for pi0 in cfg.pi0_grid():
        pi0f = float(pi0)

        def objective(u: float) -> float:
            return neg_loglik_u(u, pi0f, zarr, sarr, null_set, b_upper)

        res = nelder_mead_minimize(objective, u_init, tol=cfg.optimizer_tol,
                                   max_iter=cfg.max_iter)
        any_converged = any_converged or res.converged
        ll = -res.min_value
        if ll >= best_ll:
            best_ll, best_u, best_pi0 = ll, res.argmin, float(pi0)
    if not any_converged:
        raise ConvergenceError("phi optimization failed to converge at every "
                               "pi0 grid point")

    phi_hat = max(0.0, math.exp(best_u) - _kernels.EPS_PHI)
    return NullFit(
        measure_id=measure_id,
        phi_hat=phi_hat,
        pi0_hat=best_pi0,
        phi_init=phi_init,
        v=v,
        interval_bounds=np.column_stack([-b_upper, b_upper]),
        null_set=null_set,
        loglik=best_ll,
        sigma2_alpha_hat=phi_hat * a_psi,
    )


def z_empirical_null(z_fe: float, size: float, phi_hat: float) -> float:
    """Empirical-null corrected score: z / sqrt(1 + phi_hat * size)."""
    if phi_hat < 0:
        raise InputError(f"phi_hat must be nonnegative, got {phi_hat}")
    if size < 0:
        raise InputError(f"size must be nonnegative, got {size}")
    return z_fe / math.sqrt(1.0 + phi_hat * size)


def control_limits(
    phi: float,
    expected: float,
    size: float,
    a_psi: float = 1.0,
    alpha_z: float = 1.96,
) -> tuple[float, float]:
    """Funnel-plot control limits on the observed/expected ratio scale.

    Inverts the fixed-effects standardization and the empirical-null
    correction at |Z| = alpha_z:
    1 +/- alpha_z * sqrt(a_psi * size * (1 + phi * size)) / expected.
    phi = 0 gives the fixed-effects limits.
    """
    if expected <= 0 or size <= 0:
        raise InputError("expected and size must be positive")
    if alpha_z <= 0:
        raise InputError(f"alpha_z must be positive, got {alpha_z}")
    half = alpha_z * math.sqrt(a_psi * size * (1.0 + phi * size)) / expected
    return (1.0 - half, 1.0 + half)
