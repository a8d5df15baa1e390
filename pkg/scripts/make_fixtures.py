#!/usr/bin/env python3
"""Regenerate the synthetic test fixtures under tests/fixtures/.

The center dataset mimics a transplant-registry release: 212 centers with
four measures (two access measures, two post-transplant outcome measures),
realistic effective-size spreads, measure-specific overdispersion, and a few
genuinely outlying centers. Deterministic for the pinned seed.
"""

import json
import math
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
SEED = 20200801

N_CENTERS = 212


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def make_centers(rng):
    rows = []
    center_ids = [f"C{i + 1:04d}" for i in range(N_CENTERS)]

    # per-center volume factor shared across measures
    volume = rng.lognormal(mean=4.0, sigma=0.8, size=N_CENTERS)

    # a handful of centers with real quality effects (same sign pattern
    # across access/outcome measures to make the composite interesting)
    gamma = np.zeros(N_CENTERS)
    gamma[rng.choice(N_CENTERS, 6, replace=False)] = rng.choice(
        [-0.8, 0.8], 6)

    def poisson_measure(measure_id, size_scale, sigma2):
        alpha = rng.normal(0.0, math.sqrt(sigma2), N_CENTERS)
        expected = size_scale * volume * rng.uniform(0.8, 1.25, N_CENTERS)
        observed = rng.poisson(expected * np.exp(gamma + alpha))
        for cid, o, e in zip(center_ids, observed, expected):
            # effective_size left empty: the poisson fill rule supplies it
            rows.append((cid, measure_id, f"{float(o):.6f}", f"{e:.6f}", ""))

    def binomial_measure(measure_id, sigma2):
        alpha = rng.normal(0.0, math.sqrt(sigma2), N_CENTERS)
        offers = np.maximum(8, (volume * rng.uniform(1.5, 2.5, N_CENTERS)).astype(int))
        p0 = rng.uniform(0.35, 0.6, N_CENTERS)
        p = _expit(np.log(p0 / (1 - p0)) + gamma + alpha)
        observed = rng.binomial(offers, p)
        expected = offers * p0
        size = offers * p0 * (1 - p0)
        for cid, o, e, n in zip(center_ids, observed, expected, size):
            rows.append((cid, measure_id, f"{float(o):.6f}", f"{e:.6f}", f"{n:.6f}"))

    poisson_measure("TRR", 1.0, 0.14)
    binomial_measure("SAR", 0.24)
    poisson_measure("PSMR", 0.06, 0.04)
    poisson_measure("GSMR", 0.09, 0.04)

    # group rows by center, measures in declaration order
    order = {"TRR": 0, "SAR": 1, "PSMR": 2, "GSMR": 3}
    rows.sort(key=lambda r: (r[0], order[r[1]]))
    return rows


def write_centers(rows, path):
    lines = ["center_id,measure_id,observed,expected,effective_size"]
    lines += [",".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_measures(path):
    measures = [
        {"measure_id": "TRR", "family": "poisson", "direction": "higher_is_better"},
        {"measure_id": "SAR", "family": "binomial", "direction": "higher_is_better"},
        {"measure_id": "PSMR", "family": "poisson", "direction": "lower_is_better"},
        {"measure_id": "GSMR", "family": "poisson", "direction": "lower_is_better"},
    ]
    path.write_text(json.dumps(measures, indent=2) + "\n", encoding="utf-8")


def write_sim_configs():
    (FIXTURES / "sim_smoke.json").write_text(json.dumps({
        "experiment": "flagging",
        "seed": 7,
        "iterations": 2,
        "gamma_grid": [0.0, 1.0],
    }, indent=2) + "\n", encoding="utf-8")
    (FIXTURES / "sim_smoke_tuning.json").write_text(json.dumps({
        "experiment": "tuning",
        "seed": 8,
        "iterations": 2,
        "gamma_grid": [2.0],
        "q_grid": [0.0, 5.0],
        "outlier_fraction": 0.10,
    }, indent=2) + "\n", encoding="utf-8")
    (FIXTURES / "sim_smoke_composite.json").write_text(json.dumps({
        "experiment": "composite",
        "seed": 9,
        "iterations": 2,
        "gamma_grid": [1.0],
        "sigma2_alpha": [0.14, 0.04],
        "outlier_fraction": 0.10,
        "exposure_mean": 2500000.0,
    }, indent=2) + "\n", encoding="utf-8")


def write_malformed():
    bad = FIXTURES / "malformed"
    bad.mkdir(parents=True, exist_ok=True)
    header = "center_id,measure_id,observed,expected,effective_size"
    cases = {
        "bad_header.csv": "center,measure,obs,exp,size\nC1,TRR,1,1,1\n",
        "non_numeric.csv": f"{header}\nC0001,TRR,abc,40,\n",
        "missing_binomial_size.csv": f"{header}\nC0001,SAR,30,25,\n",
        "duplicate_pair.csv": f"{header}\nC0001,TRR,50,40,\nC0001,TRR,51,40,\n",
        "unknown_measure.csv": f"{header}\nC0001,XYZ,50,40,\n",
        "wrong_field_count.csv": f"{header}\nC0001,TRR,50,40\n",
        "binomial_size_exceeds_expected.csv": f"{header}\nC0001,SAR,30,25,26\n",
        "poisson_size_mismatch.csv": f"{header}\nC0001,TRR,50,40,39\n",
    }
    for name, text in cases.items():
        (bad / name).write_text(text, encoding="utf-8")
    (bad / "unknown_family.json").write_text(json.dumps([
        {"measure_id": "X", "family": "gamma", "direction": "higher_is_better"},
    ]) + "\n", encoding="utf-8")
    (bad / "bad_a_psi.json").write_text(json.dumps([
        {"measure_id": "X", "family": "binomial", "direction": "higher_is_better",
         "a_psi": 2.0},
    ]) + "\n", encoding="utf-8")
    (bad / "unknown_key.json").write_text(json.dumps([
        {"measure_id": "X", "family": "poisson", "direction": "higher_is_better",
         "flavour": "grape"},
    ]) + "\n", encoding="utf-8")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    write_centers(make_centers(rng), FIXTURES / "centers.csv")
    write_measures(FIXTURES / "measures.json")
    write_sim_configs()
    write_malformed()
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
