import csv
import json

import pytest

from credband.harness import (
    CSV_COLUMNS,
    CoverageReport,
    ExperimentConfig,
    cox_freedman_checks,
    emit_report,
    load_report,
    rate_table,
    run_coverage,
    run_cox_freedman_demo,
    run_eb_study,
    run_rate_study,
)
from credband.sequence import PolyIllPosed
from credband.truths import PolyDecay, RandomHolder, TruthSpec, parse_truth


def small(**kw):
    base = dict(n_grid=(1e2, 1e3), reps=30, draws=10_000, grid_size=256, calib_draws=10_000, n_trunc=512)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.gamma, c.inflation_M, c.reps, c.draws, c.norm_kind) == (0.5, 3.0, 200, 100_000, "sup")
        assert c.truth == TruthSpec(PolyDecay(1.0, 1.0))

    def test_dict_round_trip(self):
        c = small(prior_alpha="eb", kappa=PolyIllPosed(1.0), truth=parse_truth("holder:alpha=1,seed=2"))
        d = json.loads(json.dumps(c.to_dict()))
        assert ExperimentConfig.from_dict(d) == c

    def test_string_fields(self):
        c = ExperimentConfig.from_dict({"truth": "alt:alpha=2", "kappa": "poly:0.5", "n_grid": [100]})
        assert c.truth.family.kind == "alt"
        assert c.kappa == PolyIllPosed(0.5)

    @pytest.mark.parametrize("bad", [
        {"gamma": 0.7}, {"inflation_M": 0.5}, {"norm_kind": "l1"}, {"n_grid": []},
        {"prior_alpha": 20.0}, {"master_seed": -1}, {"reps": 0},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            small(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict({"nn": 3})

    def test_truth_length_covers_grid(self):
        c = small(n_grid=(1e2, 1e6), n_trunc=None)
        assert c.truth_length() == c.model(1e6).n_trunc > c.model(1e2).n_trunc


class TestCoverage:
    def test_large_inflation_covers(self):
        r = run_coverage(small(inflation_M=100.0))
        assert r.coverage() == [1.0, 1.0]
        assert r.status["calibration"]

    def test_noiseless_zero_truth(self):
        r = run_coverage(small(truth=TruthSpec(PolyDecay(1.0, 0.0)), noiseless=True, inflation_M=1.0))
        assert all(row["covered"] == 1 and row["error"] == 0.0 for row in r.rows)

    def test_aggregates_exact(self):
        r = run_coverage(small(inflation_M=1.0))
        for cell in r.cells:
            rows = [x for x in r.rows if x["n"] == cell["n"]]
            assert cell["coverage_rate"] == sum(x["covered"] for x in rows) / len(rows)
            assert 0 <= cell["coverage_rate"] <= 1
            assert cell["mean_effective_radius"] == pytest.approx(cell["mean_radius"])
        assert [x["rep"] for x in r.rows] == list(range(30)) * 2
        assert r.extra["meta"]["coverage_claim"]

    def test_config_echo(self):
        c = small()
        assert run_coverage(c).config == c.to_dict()

    def test_deterministic_across_workers(self, tmp_path):
        c = small(prior_alpha="eb", reps=30)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        emit_report(run_coverage(c, workers=1), a, "json")
        emit_report(run_coverage(c, workers=4), b, "json")
        assert a.read_bytes() == b.read_bytes()

    def test_monotone_in_inflation(self):
        covs = [run_coverage(small(inflation_M=m)).coverage() for m in (1.0, 1.5, 3.0)]
        for lo, hi in zip(covs, covs[1:]):
            assert all(h >= l for l, h in zip(lo, hi))

    def test_in_class_truth_covered(self):
        # a truth inside B(1, 1): bias is of the radius' order and M = 3 suffices
        c = small(truth=TruthSpec(RandomHolder(1.0, 1.0, 0)), n_grid=(1e3, 1e4), reps=40, grid_size=4096, n_trunc=None)
        assert all(cv >= 0.95 for cv in run_coverage(c).coverage())

    def test_l2_and_ill_posed(self):
        r = run_coverage(small(norm_kind="l2", kappa=PolyIllPosed(0.5), inflation_M=100.0))
        assert r.coverage() == [1.0, 1.0]
        assert r.cells[0]["grid_size"] is None


class TestStudies:
    def test_rate_study(self):
        c = small(n_grid=(1e2, 1e3, 1e4))
        r = run_rate_study(c)
        assert r.status["rate_band"] and r.status["radii_decreasing"]
        assert [t["n"] for t in rate_table(r)] == [1e2, 1e3, 1e4]
        assert r.extra["rate_ratio_spread"] <= 4

    def test_rate_study_needs_span(self):
        with pytest.raises(ValueError):
            run_rate_study(small(n_grid=(1e2, 1e3)))

    def test_rate_band_failure_keeps_data(self):
        r = run_rate_study(small(n_grid=(1e2, 1e3, 1e4), rate_band=1.0))
        assert not r.status["rate_band"] and len(r.rows) == 90

    def test_gamma_shrinks_radius(self):
        r1 = run_coverage(small(gamma=0.25))
        r2 = run_coverage(small(gamma=0.5))
        assert all(b["mean_radius"] < a["mean_radius"] for a, b in zip(r1.cells, r2.cells))

    def test_cox_freedman_arm_swap(self):
        cfg = small(prior_alpha=2.0, truth=TruthSpec(PolyDecay(0.5, 0.05)), norm_kind="l2",
                    n_grid=(1e3, 1e5), n_trunc=None)
        res = run_cox_freedman_demo(cfg)
        assert res.ok, (res.over.coverage(), res.under.coverage())
        swapped = cox_freedman_checks(res.under, res.over, cfg.gamma)
        assert not any(swapped.values())
        merged = res.to_report()
        assert len(merged.rows) == 4 * cfg.reps
        assert {c["arm"] for c in merged.cells} == {"oversmooth", "undersmooth"}

    def test_cox_freedman_preconditions(self):
        with pytest.raises(ValueError):
            run_cox_freedman_demo(small(prior_alpha=0.3, truth=TruthSpec(PolyDecay(0.5))))
        with pytest.raises(ValueError):
            run_cox_freedman_demo(small(prior_alpha=2.0, truth=TruthSpec(PolyDecay(0.5))), under_alpha=1.0)

    def test_eb_study(self):
        r = run_eb_study(small(n_grid=(1e2, 1e3, 1e4)))
        assert r.config["prior_alpha"] == "eb"
        for cell, b in zip(r.cells, r.extra["eb_brackets"]):
            assert cell["alpha_hat"]["q025"] == b["alpha_lo"]
            assert b["alpha_lo"] <= cell["alpha_hat"]["q50"] <= b["alpha_hi"]
            assert b["plugin_radius_ratio_max"] >= 1
        assert "rate_band" in r.status


class TestEmit:
    def test_empty_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        emit_report(CoverageReport(config={}), p)
        assert p.read_text(encoding="utf-8") == ",".join(CSV_COLUMNS) + "\n"

    def test_csv_schema(self, tmp_path):
        r = run_coverage(small())
        p = tmp_path / "sub" / "r.csv"
        emit_report(r, p, "csv")
        rows = list(csv.DictReader(p.open(encoding="utf-8")))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 60
        assert {x["covered"] for x in rows} <= {"0", "1"}
        assert float(rows[0]["radius"]) == r.rows[0]["radius"]
        assert p.read_bytes().endswith(b"\n")

    def test_json_round_trip(self, tmp_path):
        r = run_eb_study(small())
        p = tmp_path / "r.json"
        emit_report(r, p, "json")
        back = load_report(p)
        assert back.cells == json.loads(json.dumps(r.cells))
        assert back.cells[0]["mean_radius"] == r.cells[0]["mean_radius"]
        assert back.status == r.status
        emit_report(back, tmp_path / "again.json", "json")
        assert (tmp_path / "again.json").read_bytes() == p.read_bytes()

    def test_io_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_report(CoverageReport(config={}), blocker / "out.csv")

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(CoverageReport(config={}), tmp_path / "x", "xml")
