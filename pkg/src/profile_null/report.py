"""File handling and report generation: CSV/JSON input schemas, score and
composite reports, funnel-plot emission, and simulation result tables.

Numeric output is pinned at 6 decimal places with half-away-from-zero
rounding so golden-file comparisons are stable across platforms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import DEFAULT_WINSOR_Q, MomFit, fit_method_of_moments, z_method_of_moments
from .composite import CompositeResult
from .empirical_null import EnConfig, NullFit, control_limits, fit_empirical_null, z_empirical_null
from .errors import InputError
from .measures import (
    CenterStat,
    MeasureSpec,
    group_variance_diagnostic,
    measure_ratio,
    z_fixed_effects,
)
from .simulation import SimConfig, SimResult
from .svg import funnel_svg

CENTER_HEADER = ["center_id", "measure_id", "observed", "expected", "effective_size"]
SCORES_HEADER = ["center_id", "measure_id", "z_fe", "z_en", "z_mom"]
FUNNEL_HEADER = ["effective_size", "ratio", "fe_lower", "fe_upper", "en_lower", "en_upper"]

RUN_METHODS = ("fe", "mom", "en")

_MEASURE_KEYS = {
    "measure_id", "family", "direction", "a_psi", "q_percent",
    "pi0_grid_lo", "pi0_grid_hi", "pi0_grid_step",
}

_SIM_KEYS = {
    "experiment", "n_centers", "seed", "mu", "beta", "covariate_mean",
    "covariate_second_param", "exposure_mean", "sigma2_alpha",
    "outlier_fraction", "outlier_effect", "gamma_grid", "iterations",
    "q_grid", "mom_q", "q_percent",
}


def fmt6(x: float) -> str:
    """Fixed 6-decimal formatting with ties rounded away from zero."""
    if not math.isfinite(x):
        raise InputError(f"cannot format non-finite value {x!r}")
    with localcontext() as ctx:
        ctx.prec = 60
        d = Decimal(x).quantize(Decimal("0.000001"), rounding=ROUND_HALF_UP)
    if d == 0:
        return "0.000000"
    return str(d)


# ---------------------------------------------------------------------------
# input files


def read_measure_config(path: str | Path) -> list[MeasureSpec]:
    """Parse the measures JSON: a list of {measure_id, family, direction}
    objects with optional a_psi and empirical-null tuning overrides."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"measures file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"measures file {p} is not valid JSON: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise InputError(f"measures file {p} must hold a non-empty JSON list")
    specs: list[MeasureSpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw, start=1):
        if not isinstance(entry, dict):
            raise InputError(f"measures entry {i} must be a JSON object")
        unknown = set(entry) - _MEASURE_KEYS
        if unknown:
            raise InputError(f"measures entry {i} has unknown keys: "
                             f"{sorted(unknown)}")
        for key in ("measure_id", "family", "direction"):
            if key not in entry:
                raise InputError(f"measures entry {i} is missing {key!r}")
        en = EnConfig(
            q_percent=float(entry.get("q_percent", 5.0)),
            pi0_grid_lo=float(entry.get("pi0_grid_lo", 0.80)),
            pi0_grid_hi=float(entry.get("pi0_grid_hi", 1.00)),
            pi0_grid_step=float(entry.get("pi0_grid_step", 0.005)),
        )
        spec = MeasureSpec(
            measure_id=str(entry["measure_id"]),
            family=str(entry["family"]),
            direction=str(entry["direction"]),
            a_psi=float(entry.get("a_psi", 1.0)),
            en_config=en,
        )
        if spec.measure_id in seen:
            raise InputError(f"duplicate measure_id {spec.measure_id!r} "
                             f"(entry {i})")
        seen.add(spec.measure_id)
        specs.append(spec)
    return specs


def _parse_float(raw: str, column: str, line: int) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise InputError(f"row {line}: column {column!r} is not numeric: "
                         f"{raw!r}") from None
    if not math.isfinite(val):
        raise InputError(f"row {line}: column {column!r} must be finite")
    return val


def read_center_stats(
    path: str | Path,
    measures: Sequence[MeasureSpec],
) -> list[CenterStat]:
    """Parse the center statistics CSV.

    Header must be exactly center_id,measure_id,observed,expected,
    effective_size. Poisson rows may leave effective_size empty, in which
    case it is filled with the expected count; binomial and normal rows must
    supply it. Errors carry the offending row number.
    """
    p = Path(path)
    by_id = {m.measure_id: m for m in measures}
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"centers file not found: {p}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or rows[0] != CENTER_HEADER:
        raise InputError(f"centers file {p} must start with header "
                         f"{','.join(CENTER_HEADER)!r}")
    stats: list[CenterStat] = []
    seen: set[tuple[str, str]] = set()
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CENTER_HEADER):
            raise InputError(f"row {line}: expected {len(CENTER_HEADER)} "
                             f"fields, got {len(row)}")
        center_id, measure_id, obs_raw, exp_raw, size_raw = (f.strip() for f in row)
        if not center_id or not measure_id:
            raise InputError(f"row {line}: center_id and measure_id are required")
        spec = by_id.get(measure_id)
        if spec is None:
            raise InputError(f"row {line}: measure_id {measure_id!r} is not "
                             f"declared in the measures file")
        key = (center_id, measure_id)
        if key in seen:
            raise InputError(f"row {line}: duplicate center/measure pair "
                             f"{key!r}")
        seen.add(key)
        observed = _parse_float(obs_raw, "observed", line)
        expected = _parse_float(exp_raw, "expected", line)
        if size_raw == "":
            if spec.family != "poisson":
                raise InputError(f"row {line}: effective_size is required for "
                                 f"{spec.family} measure {measure_id!r}")
            size = expected
        else:
            size = _parse_float(size_raw, "effective_size", line)
            if spec.family == "poisson" and not math.isclose(
                    size, expected, rel_tol=1e-9, abs_tol=1e-9):
                raise InputError(f"row {line}: poisson effective_size must "
                                 f"equal expected ({expected!r}), got {size!r}")
        if spec.family == "binomial" and not (0.0 <= size <= expected):
            raise InputError(f"row {line}: binomial effective_size must lie "
                             f"in [0, expected]")
        stats.append(CenterStat(center_id=center_id, measure_id=measure_id,
                                observed=observed, expected=expected,
                                effective_size=size))
    if not stats:
        raise InputError(f"centers file {p} holds no data rows")
    return stats


# ---------------------------------------------------------------------------
# standardization pipeline


@dataclass
class StandardizationRun:
    """Scores and fits from one standardization pass over a dataset."""

    method: str
    measures: list[MeasureSpec]
    stats: list[CenterStat]
    z_fe: dict[tuple[str, str], float] = field(default_factory=dict)
    z_en: dict[tuple[str, str], float] = field(default_factory=dict)
    z_mom: dict[tuple[str, str], float] = field(default_factory=dict)
    null_fits: dict[str, NullFit] = field(default_factory=dict)
    mom_fits: dict[str, MomFit] = field(default_factory=dict)
    skipped: list[tuple[str, str, str]] = field(default_factory=list)

    def scores_for(self, method: str) -> dict[tuple[str, str], float]:
        return {"fe": self.z_fe, "en": self.z_en, "mom": self.z_mom}[method]


def standardize(
    measures: Sequence[MeasureSpec],
    stats: Sequence[CenterStat],
    method: str = "en",
    mom_q: float = DEFAULT_WINSOR_Q,
) -> StandardizationRun:
    """Compute fixed-effects scores for every center/measure and, per the
    requested method, the empirical-null or method-of-moments corrections.

    Centers with non-positive effective size or expected count are excluded
    from all fitting and recorded in the skipped list.
    """
    if method not in RUN_METHODS:
        raise InputError(f"method must be one of {RUN_METHODS}, got {method!r}")
    by_id = {m.measure_id: m for m in measures}
    seen: set[tuple[str, str]] = set()
    for st in stats:
        if st.measure_id not in by_id:
            raise InputError(f"center {st.center_id!r} references undeclared "
                             f"measure {st.measure_id!r}")
        key = (st.center_id, st.measure_id)
        if key in seen:
            raise InputError(f"duplicate center/measure pair {key!r}")
        seen.add(key)
    run = StandardizationRun(method=method, measures=list(measures),
                             stats=list(stats))
    for spec in measures:
        mstats = [s for s in stats if s.measure_id == spec.measure_id]
        usable: list[CenterStat] = []
        for st in mstats:
            if st.effective_size <= 0:
                run.skipped.append((st.center_id, st.measure_id,
                                    "effective_size <= 0"))
            elif st.expected <= 0:
                run.skipped.append((st.center_id, st.measure_id,
                                    "expected <= 0"))
            else:
                usable.append(st)
        if not usable:
            continue
        z = np.array([z_fixed_effects(st, spec).value for st in usable])
        sizes = np.array([st.effective_size for st in usable])
        for st, zv in zip(usable, z):
            run.z_fe[(st.center_id, st.measure_id)] = float(zv)
        if method == "en":
            fit = fit_empirical_null(z, sizes, spec.en_config,
                                     a_psi=spec.a_psi,
                                     measure_id=spec.measure_id)
            run.null_fits[spec.measure_id] = fit
            for st, zv, n in zip(usable, z, sizes):
                run.z_en[(st.center_id, st.measure_id)] = z_empirical_null(
                    float(zv), float(n), fit.phi_hat)
        elif method == "mom":
            mom = fit_method_of_moments(z, sizes, q_percent=mom_q,
                                        a_psi=spec.a_psi)
            run.mom_fits[spec.measure_id] = mom
            for st, zv, n in zip(usable, z, sizes):
                run.z_mom[(st.center_id, st.measure_id)] = z_method_of_moments(
                    float(zv), float(n), mom.phi_mom)
    return run


def align_scores(run: StandardizationRun) -> tuple[list[str], np.ndarray]:
    """Centers x measures table of direction-aligned scores for the run's
    method, NaN where a center lacks a measure."""
    scores = run.scores_for(run.method)
    center_ids: list[str] = []
    for st in run.stats:
        if st.center_id not in center_ids:
            center_ids.append(st.center_id)
    mat = np.full((len(center_ids), len(run.measures)), np.nan)
    row = {cid: i for i, cid in enumerate(center_ids)}
    for k, spec in enumerate(run.measures):
        sign = 1.0 if spec.direction == "higher_is_better" else -1.0
        for cid in center_ids:
            val = scores.get((cid, spec.measure_id))
            if val is not None:
                mat[row[cid], k] = sign * val
    return center_ids, mat


# ---------------------------------------------------------------------------
# report writers


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def write_scores_report(run: StandardizationRun, out_dir: str | Path) -> list[Path]:
    """Write scores.csv (+ null_fit.json for empirical-null runs and
    skipped.csv when centers were excluded). Returns the paths written."""
    if not run.stats:
        raise InputError("no center statistics to report")
    out = Path(out_dir)
    written: list[Path] = []

    lines = [",".join(SCORES_HEADER)]
    for st in run.stats:
        key = (st.center_id, st.measure_id)
        cells = [st.center_id, st.measure_id]
        for col in (run.z_fe, run.z_en, run.z_mom):
            cells.append(fmt6(col[key]) if key in col else "")
        lines.append(",".join(cells))
    scores_path = out / "scores.csv"
    _write_text(scores_path, "\n".join(lines) + "\n")
    written.append(scores_path)

    if run.null_fits:
        payload = []
        for spec in run.measures:
            fit = run.null_fits.get(spec.measure_id)
            if fit is None:
                continue
            payload.append({
                "measure_id": fit.measure_id,
                "phi_hat": fit.phi_hat,
                "pi0_hat": fit.pi0_hat,
                "sigma2_alpha_hat": fit.sigma2_alpha_hat,
                "phi_init": fit.phi_init,
                "v": fit.v,
                "n_null_set": fit.n_null_set,
                "loglik": fit.loglik,
            })
        fit_path = out / "null_fit.json"
        _write_text(fit_path, json.dumps(payload, indent=2) + "\n")
        written.append(fit_path)

    if run.skipped:
        rows = ["center_id,measure_id,reason"]
        rows += [f"{c},{m},{reason}" for c, m, reason in run.skipped]
        skipped_path = out / "skipped.csv"
        _write_text(skipped_path, "\n".join(rows) + "\n")
        written.append(skipped_path)
    return written


def read_scores_csv(path: str | Path) -> list[dict[str, str]]:
    """Read back a scores.csv written by write_scores_report."""
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(text.splitlines()))
    if not rows or rows[0] != SCORES_HEADER:
        raise InputError(f"not a scores file: {path}")
    return [dict(zip(SCORES_HEADER, row)) for row in rows[1:] if row]


def write_composite_report(
    results: Sequence[CompositeResult],
    out_path: str | Path,
) -> Path:
    """Per-center composite rows plus a trailing summary block with the
    poor/average/good percentages."""
    if not results:
        raise InputError("no composite results to report")
    lines = ["center_id,z_cs,label,partial"]
    counts = {"poor": 0, "average": 0, "good": 0}
    for res in results:
        counts[res.label] += 1
        lines.append(f"{res.center_id},{fmt6(res.z_cs)},{res.label},"
                     f"{'true' if res.partial else 'false'}")
    total = len(results)
    lines.append("summary,poor_pct,average_pct,good_pct")
    lines.append("percent," + ",".join(
        fmt6(100.0 * counts[k] / total) for k in ("poor", "average", "good")))
    path = Path(out_path)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def emit_funnel(
    stats: Sequence[CenterStat],
    spec: MeasureSpec,
    null_fit: NullFit,
    alpha_z_list: Sequence[float] = (1.96,),
    out_dir: str | Path = ".",
) -> list[Path]:
    """Funnel CSV and SVG for one measure: per-center O/E ratios with
    fixed-effects (phi = 0) and empirical-null (phi = phi_hat) control
    limits at each requested |Z| threshold."""
    if not alpha_z_list:
        raise InputError("alpha_z_list must not be empty")
    usable = [st for st in stats
              if st.measure_id == spec.measure_id
              and st.expected > 0 and st.effective_size > 0]
    if not usable:
        raise InputError(f"no plottable centers for measure "
                         f"{spec.measure_id!r}")
    usable.sort(key=lambda st: (st.effective_size, st.center_id))
    out = Path(out_dir)
    written: list[Path] = []
    multi = len(alpha_z_list) > 1
    for alpha_z in alpha_z_list:
        rows = []
        for st in usable:
            ratio = measure_ratio(st)
            fe_lo, fe_hi = control_limits(0.0, st.expected, st.effective_size,
                                          spec.a_psi, alpha_z)
            en_lo, en_hi = control_limits(null_fit.phi_hat, st.expected,
                                          st.effective_size, spec.a_psi, alpha_z)
            rows.append((st.effective_size, ratio, fe_lo, fe_hi, en_lo, en_hi))
        suffix = f"_z{fmt6(alpha_z).rstrip('0').rstrip('.')}" if multi else ""
        csv_path = out / f"funnel_{spec.measure_id}{suffix}.csv"
        lines = [",".join(FUNNEL_HEADER)]
        lines += [",".join(fmt6(v) for v in row) for row in rows]
        _write_text(csv_path, "\n".join(lines) + "\n")
        written.append(csv_path)

        svg_path = out / f"funnel_{spec.measure_id}{suffix}.svg"
        cols = list(zip(*rows))
        _write_text(svg_path, funnel_svg(
            f"{spec.measure_id} funnel (|Z| = {alpha_z:g})",
            cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]))
        written.append(svg_path)
    return written


def write_diagnostics(
    measures: Sequence[MeasureSpec],
    stats: Sequence[CenterStat],
    out_path: str | Path,
    n_groups: int = 3,
) -> Path:
    """Size-grouped Z-score variance table per measure (fixed-effects
    scores), the overdispersion diagnostic."""
    run = standardize(measures, stats, method="fe")
    lines = ["measure_id,group,mean_size,z_variance,flag_proportion"]
    for spec in measures:
        pairs = [(run.z_fe[(st.center_id, st.measure_id)], st.effective_size)
                 for st in run.stats
                 if st.measure_id == spec.measure_id
                 and (st.center_id, st.measure_id) in run.z_fe]
        if not pairs:
            continue
        z, sizes = zip(*pairs)
        groups = group_variance_diagnostic(list(z), list(sizes), n_groups)
        for g, (mean_size, var, prop) in enumerate(groups, start=1):
            lines.append(f"{spec.measure_id},{g},{fmt6(mean_size)},"
                         f"{fmt6(var)},{fmt6(prop)}")
    path = Path(out_path)
    _write_text(path, "\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# simulation config and result files


def read_sim_config(path: str | Path) -> tuple[SimConfig, str]:
    """Parse a simulation config JSON; returns the config and the experiment
    kind (flagging, tuning, or composite)."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"simulation config not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"simulation config {p} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError("simulation config must be a JSON object")
    unknown = set(raw) - _SIM_KEYS
    if unknown:
        raise InputError(f"simulation config has unknown keys: {sorted(unknown)}")
    kind = raw.get("experiment", "flagging")
    if kind not in ("flagging", "tuning", "composite"):
        raise InputError(f"experiment must be flagging, tuning, or composite, "
                         f"got {kind!r}")
    kwargs = {}
    for key in ("n_centers", "seed", "iterations"):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("mu", "beta", "covariate_mean", "covariate_second_param",
                "exposure_mean", "outlier_fraction", "outlier_effect", "mom_q"):
        if key in raw:
            kwargs[key] = float(raw[key])
    for key in ("sigma2_alpha", "gamma_grid", "q_grid"):
        if key in raw:
            kwargs[key] = tuple(float(v) for v in raw[key])
    if "q_percent" in raw:
        kwargs["en_config"] = EnConfig(q_percent=float(raw["q_percent"]))
    try:
        config = SimConfig(**kwargs)
    except TypeError as exc:
        raise InputError(f"bad simulation config: {exc}") from None
    return config, kind


def write_sim_result(result: SimResult, out_dir: str | Path) -> list[Path]:
    """Plot-ready curve tables for a simulation result."""
    out = Path(out_dir)
    written: list[Path] = []
    if result.kind == "flagging":
        lines = ["gamma,n_effective,n_failed,fe_rate,fe_se,mom_rate,mom_se,"
                 "en_rate,en_se"]
        for gi, gamma in enumerate(result.gamma_grid):
            cells = [fmt6(gamma), str(int(result.n_effective[gi])),
                     str(int(result.n_failed[gi]))]
            for m in ("fe", "mom", "en"):
                cells.append(fmt6(float(result.flag_rates[m][gi])))
                cells.append(fmt6(float(result.flag_se[m][gi])))
            lines.append(",".join(cells))
        path = out / "flag_curves.csv"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    elif result.kind == "tuning":
        lines = ["q,n_effective,en_sigma2_mean,en_sigma2_sd,en_flag_rate,"
                 "en_flag_se,mom_sigma2_mean,mom_sigma2_sd,mom_flag_rate,"
                 "mom_flag_se"]

        def cell(x: float) -> str:
            return "" if math.isnan(x) else fmt6(x)

        for qi, q in enumerate(result.q_grid):
            cells = [fmt6(q), str(int(result.n_effective[qi]))]
            for m in ("en", "mom"):
                cells.append(cell(float(result.sigma2_mean[m][qi])))
                cells.append(cell(float(result.sigma2_sd[m][qi])))
                cells.append(cell(float(result.flag_rates[m][qi])))
                cells.append(cell(float(result.flag_se[m][qi])))
            lines.append(",".join(cells))
        path = out / "tuning_curves.csv"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    elif result.kind == "composite":
        lines = ["gamma,center,n_effective,fe_rate,fe_se,mom_rate,mom_se,"
                 "en_rate,en_se"]
        for gi, gamma in enumerate(result.gamma_grid):
            for ci in range(4):
                cells = [fmt6(gamma), f"Center{ci + 1}",
                         str(int(result.n_effective[gi]))]
                for m in ("fe", "mom", "en"):
                    cells.append(fmt6(float(result.focal_flag_rates[m][ci, gi])))
                    cells.append(fmt6(float(result.focal_flag_se[m][ci, gi])))
                lines.append(",".join(cells))
        path = out / "composite_curves.csv"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    else:
        raise InputError(f"unknown simulation result kind {result.kind!r}")
    return written
