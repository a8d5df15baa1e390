"""File parsing, report writing, CLI dispatch, exit codes, and determinism."""

import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from profile_null.cli import main
from profile_null.errors import InputError
from profile_null.report import (
    align_scores,
    emit_funnel,
    fmt6,
    read_center_stats,
    read_measure_config,
    read_scores_csv,
    read_sim_config,
    standardize,
    write_composite_report,
    write_scores_report,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def measures():
    return read_measure_config(FIXTURES / "measures.json")


@pytest.fixture(scope="module")
def stats(measures):
    return read_center_stats(FIXTURES / "centers.csv", measures)


class TestFmt6:
    def test_basics(self):
        assert fmt6(0.0) == "0.000000"
        assert fmt6(1.2345678) == "1.234568"
        assert fmt6(-1.25) == "-1.250000"

    def test_half_away_from_zero(self):
        # 2^-7 is an exact decimal tie at the 7th place: banker's rounding
        # would give ...812, away-from-zero gives ...813
        assert fmt6(0.0078125) == "0.007813"
        assert fmt6(-0.0078125) == "-0.007813"
        assert fmt6(0.0156250) == "0.015625"
        assert fmt6(1.5e-06) == "0.000002"
        assert fmt6(2.5e-06) == "0.000003"

    def test_negative_zero_normalized(self):
        assert fmt6(-1e-9) == "0.000000"

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            fmt6(float("nan"))


class TestReadMeasureConfig:
    def test_fixture_parses_with_defaults(self, measures):
        assert [m.measure_id for m in measures] == ["TRR", "SAR", "PSMR", "GSMR"]
        trr = measures[0]
        assert trr.a_psi == 1.0
        assert trr.en_config.q_percent == 5.0
        assert trr.en_config.pi0_grid_step == 0.005

    def test_direction_signs(self, measures):
        assert measures[0].direction == "higher_is_better"
        assert measures[2].direction == "lower_is_better"

    @pytest.mark.parametrize("name", ["unknown_family.json", "bad_a_psi.json",
                                      "unknown_key.json"])
    def test_malformed_rejected(self, name):
        with pytest.raises(InputError):
            read_measure_config(FIXTURES / "malformed" / name)

    def test_missing_file(self):
        with pytest.raises(InputError, match="not found"):
            read_measure_config(FIXTURES / "nope.json")


class TestReadCenterStats:
    def test_poisson_fill_rule(self, measures, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("center_id,measure_id,observed,expected,effective_size\n"
                     "C001,TRR,50,40,\n")
        stats = read_center_stats(f, measures)
        assert stats[0].effective_size == 40.0

    def test_explicit_binomial_size(self, measures, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("center_id,measure_id,observed,expected,effective_size\n"
                     "C001,SAR,30,25,18.2\n")
        stats = read_center_stats(f, measures)
        assert stats[0].effective_size == 18.2

    @pytest.mark.parametrize("name,match", [
        ("bad_header.csv", "header"),
        ("non_numeric.csv", "row 2"),
        ("missing_binomial_size.csv", "row 2"),
        ("duplicate_pair.csv", "row 3"),
        ("unknown_measure.csv", "row 2"),
        ("wrong_field_count.csv", "row 2"),
        ("binomial_size_exceeds_expected.csv", "row 2"),
        ("poisson_size_mismatch.csv", "row 2"),
    ])
    def test_malformed_rejected_with_row_numbers(self, measures, name, match):
        with pytest.raises(InputError, match=match):
            read_center_stats(FIXTURES / "malformed" / name, measures)

    def test_fixture_loads(self, stats):
        assert len(stats) == 848
        assert all(s.effective_size > 0 for s in stats)


class TestScoresReport:
    def test_en_report_roundtrips_at_printed_precision(self, measures, stats,
                                                       tmp_path):
        run = standardize(measures, stats, method="en")
        write_scores_report(run, tmp_path)
        rows = read_scores_csv(tmp_path / "scores.csv")
        assert len(rows) == 848
        for row in rows[:50]:
            key = (row["center_id"], row["measure_id"])
            assert row["z_fe"] == fmt6(run.z_fe[key])
            assert row["z_en"] == fmt6(run.z_en[key])
            assert row["z_mom"] == ""
        fit_payload = json.loads((tmp_path / "null_fit.json").read_text())
        assert [f["measure_id"] for f in fit_payload] == ["TRR", "SAR", "PSMR",
                                                          "GSMR"]
        for f in fit_payload:
            assert set(f) == {"measure_id", "phi_hat", "pi0_hat",
                              "sigma2_alpha_hat", "phi_init", "v",
                              "n_null_set", "loglik"}

    def test_zero_phi_makes_en_equal_fe(self, measures, tmp_path):
        # standard normal scores: the fitted correction is (near) identity
        rng = np.random.default_rng(0)
        lines = ["center_id,measure_id,observed,expected,effective_size"]
        for i in range(212):
            e = rng.uniform(200, 400)
            o = e + rng.normal(0, math.sqrt(e))
            lines.append(f"R{i:04d},TRR,{o:.6f},{e:.6f},")
        f = tmp_path / "null.csv"
        f.write_text("\n".join(lines) + "\n")
        stats = read_center_stats(f, measures)
        run = standardize(measures, stats, method="en")
        assert run.null_fits["TRR"].phi_hat < 0.002
        for key, z in list(run.z_fe.items())[:20]:
            assert run.z_en[key] == pytest.approx(z, rel=0.25)

    def test_skipped_centers_reported(self, measures, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("center_id,measure_id,observed,expected,effective_size\n"
                     "C001,SAR,30,25,18.2\n"
                     "C002,SAR,0,25,0\n")
        stats = read_center_stats(f, measures)
        run = standardize(measures, stats, method="fe")
        assert run.skipped == [("C002", "SAR", "effective_size <= 0")]
        write_scores_report(run, tmp_path)
        assert (tmp_path / "skipped.csv").exists()

    def test_mom_method_fills_mom_column(self, measures, stats, tmp_path):
        run = standardize(measures, stats, method="mom", mom_q=10.0)
        write_scores_report(run, tmp_path)
        rows = read_scores_csv(tmp_path / "scores.csv")
        assert rows[0]["z_mom"] != ""
        assert rows[0]["z_en"] == ""
        assert run.mom_fits["TRR"].q_percent == 10.0

    def test_empty_input_rejected(self, measures, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("center_id,measure_id,observed,expected,effective_size\n")
        with pytest.raises(InputError):
            read_center_stats(f, measures)


class TestCompositeReport:
    def test_summary_percentages_partition(self, measures, stats, tmp_path):
        run = standardize(measures, stats, method="en")
        ids, aligned = align_scores(run)
        from profile_null import composite_table
        results, skipped = composite_table(ids, aligned,
                                           [m.measure_id for m in measures])
        assert not skipped
        path = write_composite_report(results, tmp_path / "composite.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "center_id,z_cs,label,partial"
        assert lines[-2] == "summary,poor_pct,average_pct,good_pct"
        pcts = [float(x) for x in lines[-1].split(",")[1:]]
        assert sum(pcts) == pytest.approx(100.0, abs=0.01)
        assert len(lines) == 1 + 212 + 2

    def test_all_average(self, tmp_path):
        from profile_null.composite import CompositeResult
        res = [CompositeResult(center_id=f"C{i}", z_cs=0.0, label="average",
                               weights=(1.0,), correlation=np.eye(1),
                               measures_used=("A",)) for i in range(4)]
        path = write_composite_report(res, tmp_path / "c.csv")
        lines = path.read_text().splitlines()
        assert lines[-1] == "percent,0.000000,100.000000,0.000000"


class TestEmitFunnel:
    def test_csv_values_and_svg(self, measures, stats, tmp_path):
        run = standardize(measures, stats, method="en")
        spec = measures[0]
        paths = emit_funnel(stats, spec, run.null_fits["TRR"], [1.96], tmp_path)
        csv_path = [p for p in paths if p.suffix == ".csv"][0]
        svg_path = [p for p in paths if p.suffix == ".svg"][0]
        lines = csv_path.read_text().splitlines()
        assert lines[0] == ("effective_size,ratio,fe_lower,fe_upper,"
                            "en_lower,en_upper")
        assert len(lines) == 213
        sizes = [float(l.split(",")[0]) for l in lines[1:]]
        assert sizes == sorted(sizes)
        svg = svg_path.read_text()
        assert svg.startswith('<?xml version="1.0"')
        assert "profile-null funnel svg v1" in svg
        assert svg.count("<circle") == 212

    def test_known_limit_row(self, measures, tmp_path):
        # a poisson center with expected = size = 100 under phi = 0.14
        from profile_null.empirical_null import NullFit
        f = tmp_path / "c.csv"
        f.write_text("center_id,measure_id,observed,expected,effective_size\n"
                     "C001,TRR,100,100,\n")
        stats = read_center_stats(f, measures)
        fit = NullFit(measure_id="TRR", phi_hat=0.14, pi0_hat=1.0,
                      phi_init=0.1, v=1.645, interval_bounds=np.zeros((1, 2)),
                      null_set=np.ones(1, bool), loglik=0.0,
                      sigma2_alpha_hat=0.14)
        paths = emit_funnel(stats, measures[0], fit, [1.96], tmp_path)
        row = paths[0].read_text().splitlines()[1].split(",")
        assert [float(x) for x in row[2:]] == pytest.approx(
            [0.804, 1.196, 0.241, 1.759], abs=1e-3)

    def test_fe_curves_match_en_at_zero_phi(self, measures, stats, tmp_path):
        from profile_null.empirical_null import NullFit
        fit = NullFit(measure_id="TRR", phi_hat=0.0, pi0_hat=1.0, phi_init=0.0,
                      v=1.645, interval_bounds=np.zeros((1, 2)),
                      null_set=np.ones(1, bool), loglik=0.0,
                      sigma2_alpha_hat=0.0)
        paths = emit_funnel(stats, measures[0], fit, [1.96], tmp_path)
        for line in paths[0].read_text().splitlines()[1:]:
            cells = line.split(",")
            assert cells[2] == cells[4] and cells[3] == cells[5]


class TestSimConfigFile:
    def test_smoke_config(self):
        config, kind = read_sim_config(FIXTURES / "sim_smoke.json")
        assert kind == "flagging"
        assert config.iterations == 2
        assert config.gamma_grid == (0.0, 1.0)

    def test_unknown_key_rejected(self, tmp_path):
        f = tmp_path / "sim.json"
        f.write_text(json.dumps({"experiment": "flagging", "bogus": 1}))
        with pytest.raises(InputError, match="unknown keys"):
            read_sim_config(f)

    def test_unknown_experiment(self, tmp_path):
        f = tmp_path / "sim.json"
        f.write_text(json.dumps({"experiment": "magic"}))
        with pytest.raises(InputError):
            read_sim_config(f)


class TestCliDispatch:
    def test_standardize_happy_path(self, tmp_path, capsys):
        code = main(["standardize", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--method", "en", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "scores.csv").exists()
        assert (tmp_path / "null_fit.json").exists()

    def test_missing_input_file_exits_2(self, tmp_path, capsys):
        code = main(["standardize", "--centers", str(tmp_path / "ghost.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--out", str(tmp_path)])
        assert code == 2
        assert "ghost.csv" in capsys.readouterr().err

    def test_malformed_fixture_corpus_exits_2(self, tmp_path, capsys):
        for bad in sorted((FIXTURES / "malformed").glob("*.csv")):
            code = main(["standardize", "--centers", str(bad),
                         "--measures", str(FIXTURES / "measures.json"),
                         "--out", str(tmp_path)])
            assert code == 2, bad.name
            err = capsys.readouterr().err
            if "header" not in err:
                assert "row " in err, (bad.name, err)
        for bad in sorted((FIXTURES / "malformed").glob("*.json")):
            code = main(["standardize",
                         "--centers", str(FIXTURES / "centers.csv"),
                         "--measures", str(bad), "--out", str(tmp_path)])
            assert code == 2, bad.name

    def test_composite_pipeline(self, tmp_path):
        code = main(["composite", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "composite.csv").exists()
        assert (tmp_path / "scores.csv").exists()

    def test_funnel_outputs(self, tmp_path):
        code = main(["funnel", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--out", str(tmp_path)])
        assert code == 0
        for mid in ("TRR", "SAR", "PSMR", "GSMR"):
            assert (tmp_path / f"funnel_{mid}.csv").exists()
            assert (tmp_path / f"funnel_{mid}.svg").exists()

    def test_simulate_smoke(self, tmp_path):
        code = main(["simulate", "--config", str(FIXTURES / "sim_smoke.json"),
                     "--out", str(tmp_path), "--workers", "1"])
        assert code == 0
        lines = (tmp_path / "flag_curves.csv").read_text().splitlines()
        assert lines[0].startswith("gamma,")
        assert len(lines) == 3

    def test_simulate_tuning_and_composite_smoke(self, tmp_path):
        code = main(["simulate", "--config",
                     str(FIXTURES / "sim_smoke_tuning.json"),
                     "--out", str(tmp_path), "--workers", "1"])
        assert code == 0
        assert (tmp_path / "tuning_curves.csv").exists()
        code = main(["simulate", "--config",
                     str(FIXTURES / "sim_smoke_composite.json"),
                     "--out", str(tmp_path), "--workers", "1"])
        assert code == 0
        lines = (tmp_path / "composite_curves.csv").read_text().splitlines()
        assert len(lines) == 5

    def test_diagnose(self, tmp_path):
        code = main(["diagnose", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--out", str(tmp_path), "--groups", "3"])
        assert code == 0
        lines = (tmp_path / "diagnostics.csv").read_text().splitlines()
        assert lines[0] == "measure_id,group,mean_size,z_variance,flag_proportion"
        assert len(lines) == 1 + 4 * 3

    def test_determinism_across_runs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["composite",
                         "--centers", str(FIXTURES / "centers.csv"),
                         "--measures", str(FIXTURES / "measures.json"),
                         "--out", str(out)]) == 0
        for name in ("scores.csv", "null_fit.json", "composite.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_console_script_entrypoint(self):
        exe = shutil.which("profile-null")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run([exe, "--version"], capture_output=True, text=True)
        assert proc.returncode == 0


class TestValidationEdges:
    def test_standardize_rejects_duplicates(self, measures):
        from profile_null import CenterStat
        dup = [CenterStat("C1", "TRR", 10, 10, 10),
               CenterStat("C1", "TRR", 11, 10, 10)]
        with pytest.raises(InputError, match="duplicate"):
            standardize(measures, dup, method="fe")

    def test_write_scores_rejects_empty_run(self, measures, tmp_path):
        from profile_null.report import StandardizationRun
        run = StandardizationRun(method="fe", measures=list(measures), stats=[])
        with pytest.raises(InputError):
            write_scores_report(run, tmp_path)

    def test_degenerate_fit_exits_3(self, tmp_path, capsys):
        # a majority block of identical huge scores collapses the robust
        # scale to zero, so every center sits outside the interval and the
        # fit aborts
        lines = ["center_id,measure_id,observed,expected,effective_size"]
        for i in range(212):
            e = 100.0
            z = 30.0 if i < 120 else -5.0
            o = e + z * math.sqrt(e)
            lines.append(f"X{i:04d},TRR,{o:.6f},{e:.6f},")
        f = tmp_path / "c.csv"
        f.write_text("\n".join(lines) + "\n")
        code = main(["standardize", "--centers", str(f),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--method", "en", "--out", str(tmp_path / "out")])
        assert code == 3
        assert "null set" in capsys.readouterr().err

    def test_clamped_zero_fit_prints_identical_columns(self, measures, tmp_path):
        # underdispersed scores clamp phi_hat to zero: the corrected column
        # must equal the naive one at printed precision
        rng = np.random.default_rng(88)
        lines = ["center_id,measure_id,observed,expected,effective_size"]
        for i in range(212):
            e = rng.uniform(200, 400)
            o = e + 0.3 * rng.normal(0, math.sqrt(e))
            lines.append(f"U{i:04d},TRR,{o:.6f},{e:.6f},")
        f = tmp_path / "c.csv"
        f.write_text("\n".join(lines) + "\n")
        stats = read_center_stats(f, measures)
        run = standardize(measures, stats, method="en")
        assert run.null_fits["TRR"].phi_hat <= 1e-10
        write_scores_report(run, tmp_path)
        for row in read_scores_csv(tmp_path / "scores.csv"):
            assert row["z_en"] == row["z_fe"]


class TestWorkerResolution:
    def test_env_caps_machine_parallelism(self, monkeypatch):
        from profile_null.simulation import resolve_workers
        monkeypatch.setenv("PROFILE_NULL_THREADS", "1")
        assert resolve_workers(None) == 1
        monkeypatch.setenv("PROFILE_NULL_THREADS", "notanint")
        with pytest.raises(InputError):
            resolve_workers(None)
        monkeypatch.setenv("PROFILE_NULL_THREADS", "0")
        with pytest.raises(InputError):
            resolve_workers(None)
        monkeypatch.delenv("PROFILE_NULL_THREADS")
        assert resolve_workers(3) == 3
        with pytest.raises(InputError):
            resolve_workers(0)


class TestAdditionalCliPaths:
    def test_composite_with_mom_standardization(self, tmp_path):
        code = main(["composite", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--method", "mom", "--mom-q", "10", "--out", str(tmp_path)])
        assert code == 0
        rows = read_scores_csv(tmp_path / "scores.csv")
        assert rows[0]["z_mom"] != "" and rows[0]["z_en"] == ""
        assert (tmp_path / "composite.csv").exists()

    def test_funnel_multiple_alphas(self, tmp_path):
        code = main(["funnel", "--centers", str(FIXTURES / "centers.csv"),
                     "--measures", str(FIXTURES / "measures.json"),
                     "--alpha-z", "1.96", "--alpha-z", "2.576",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "funnel_TRR_z1.96.csv").exists()
        assert (tmp_path / "funnel_TRR_z2.576.svg").exists()

    def test_sim_config_q_percent_passthrough(self, tmp_path):
        f = tmp_path / "sim.json"
        f.write_text(json.dumps({"experiment": "flagging", "iterations": 1,
                                 "q_percent": 2.5, "gamma_grid": [0.0]}))
        config, _ = read_sim_config(f)
        assert config.en_config.q_percent == 2.5
