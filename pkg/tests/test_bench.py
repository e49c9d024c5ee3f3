import json
import math
import os

import numpy as np
import pytest

import capce
from capce.bench import (NonFiniteEstimate, bootstrap, bootstrap_estimator,
                         evaluate_mse, emit_report, results_csv_text,
                         results_markdown_text, run_benchmark, svg_curves)
from capce.data import TwoSampleDataset
from capce.scm import EvalGrid, make_grid
from tests.conftest import make_joint


class _StubModel:
    def __init__(self, fn):
        self.fn = fn
        self.kind = "stub"

    def capce(self, x, w):
        return self.fn(np.asarray(x, dtype=float), np.asarray(w, dtype=float))


class TestEvaluateMse:
    def test_oracle_is_zero(self):
        grid = capce.default_grid()
        model = _StubModel(lambda x, w: capce.true_capce("A", x, w))
        assert evaluate_mse(model, "A", grid) == 0.0

    def test_constant_offset_is_one(self):
        grid = capce.default_grid()
        model = _StubModel(lambda x, w: capce.true_capce("B", x, w) + 1.0)
        assert evaluate_mse(model, "B", grid) == pytest.approx(1.0)

    def test_two_point_grid_by_hand(self):
        # estimates {1, 3} against oracle {0, 0}: (1 + 9) / 2 = 5
        grid = EvalGrid(np.array([0.3, 0.7]), np.array([0.0]))
        offset = _StubModel(
            lambda x, w: capce.true_capce("A", x, w) + np.where(x < 0.5, 1.0, 3.0))
        assert evaluate_mse(offset, "A", grid) == pytest.approx(5.0)

    def test_non_finite_estimate_raises(self):
        grid = capce.default_grid()
        model = _StubModel(lambda x, w: np.where(x > 1.9, np.inf, 0.0))
        with pytest.raises(NonFiniteEstimate):
            evaluate_mse(model, "A", grid)


def _small_plan(reps=2, estimators=None, settings=("C",), n=400, seed=7):
    if estimators is None:
        estimators = (capce.EstimatorConfig(kind="parametric", label="P-CAPCE",
                                            basis_cfg={"terms": ["1", "W", "X"]},
                                            p_degree=3, z0=-1.0),)
    return capce.BenchmarkPlan(settings=settings, sample_sizes=(n,),
                               replications=reps, estimators=estimators,
                               base_seed=seed)


class TestRunBenchmark:
    def test_deterministic_tables(self):
        r1 = run_benchmark(_small_plan())
        r2 = run_benchmark(_small_plan())
        assert results_csv_text(r1) == results_csv_text(r2)

    def test_markdown_matches_csv_values(self):
        res = run_benchmark(_small_plan())
        csv_cells = results_csv_text(res).splitlines()[1].split(",")
        md_cells = [c.strip() for c in
                    results_markdown_text(res).splitlines()[2].split("|")[1:-1]]
        assert csv_cells == md_cells

    def test_empty_estimator_list(self, tmp_path):
        res = run_benchmark(_small_plan(estimators=()))
        assert res.records == []
        paths = emit_report(res, str(tmp_path))
        text = open(os.path.join(tmp_path, "results.csv")).read()
        assert text.splitlines() == [
            "setting,n,estimator,reps,failures,mse_mean,mse_sd"]

    def test_failures_recorded_not_raised(self):
        # an impossible estimator config: more instrument features than rows
        bad = capce.EstimatorConfig(kind="parametric", label="BAD",
                                    basis_cfg={"terms": ["1", "X"]},
                                    p_degree=300, z0=-1.0)
        res = run_benchmark(_small_plan(estimators=(bad,), n=100))
        rows = res.summary_rows()
        assert rows[0]["failures"] == rows[0]["reps"]
        assert math.isnan(rows[0]["mse_mean"])
        assert all(r["error"] for r in res.records)

    def test_parallel_equals_serial(self):
        plan_serial = _small_plan(reps=2, settings=("C", "A"))
        plan_par = capce.BenchmarkPlan(settings=("C", "A"), sample_sizes=(400,),
                                       replications=2,
                                       estimators=plan_serial.estimators,
                                       base_seed=7, n_jobs=2)
        assert results_csv_text(run_benchmark(plan_serial)) == \
            results_csv_text(run_benchmark(plan_par))

    def test_coefficient_aggregation(self):
        res = run_benchmark(_small_plan(reps=3))
        mu = res.coefficient_means("C", 400, "P-CAPCE")
        assert set(mu) == {"1", "W", "X"}
        sd = res.coefficient_sds("C", 400, "P-CAPCE")
        assert all(v >= 0 for v in sd.values())

    def test_replication_stability_smoke(self):
        # doubling replications moves cell means by less than 2 pooled SEs
        base = _small_plan(reps=12, n=2000, seed=3)
        double = capce.BenchmarkPlan(settings=("C",), sample_sizes=(2000,),
                                     replications=24,
                                     estimators=base.estimators, base_seed=3)
        r1 = run_benchmark(base).summary_rows()[0]
        r2 = run_benchmark(double).summary_rows()[0]
        pooled_se = math.hypot(r1["mse_sd"] / math.sqrt(r1["reps"]),
                               r2["mse_sd"] / math.sqrt(r2["reps"]))
        assert abs(r1["mse_mean"] - r2["mse_mean"]) < 2 * pooled_se


class TestBootstrap:
    def test_b1_collapses_to_single_fit(self):
        ds = make_joint(200, 5, y_fn=lambda x, w, u: 2 * x + u)
        cfg = capce.EstimatorConfig(kind="parametric", label="P",
                                    basis_cfg={"terms": ["1", "X"]},
                                    p_degree=3, z0=-1.0)
        grid = make_grid((-1, 1, -1, 1), 3, 3)
        rep = bootstrap_estimator(ds, cfg, b=1, seed=0, grid=grid)
        assert rep.b_successful == 1
        for stats in rep.coefficient_stats.values():
            assert stats["min"] == stats["max"] == stats["mean"]

    def test_quantiles_monotone(self):
        ds = make_joint(300, 6, y_fn=lambda x, w, u: x + w + u)
        cfg = capce.EstimatorConfig(kind="parametric", label="P",
                                    basis_cfg={"terms": ["1", "W", "X"]},
                                    p_degree=3, z0=-1.0)
        grid = make_grid((-1, 1, -1, 1), 3, 3)
        rep = bootstrap_estimator(ds, cfg, b=40, seed=1, grid=grid)
        assert rep.b_successful == 40
        for stats in rep.coefficient_stats.values():
            assert (stats["min"] <= stats["q1"] <= stats["median"]
                    <= stats["q3"] <= stats["max"])
            assert stats["sd"] >= 0

    def test_joint_resampling_preserves_pairs(self):
        # y is a deterministic function of x; resampled fits must see only
        # paired rows, so a saturated fit stays exact on every resample.
        z = np.linspace(-1, 1, 50)
        ds = TwoSampleDataset(x=z.copy(), w=np.zeros((50, 1)), z1=z, y=4 * z,
                              z2=z.copy(), joint=True)

        def fit(sample, _sel):
            assert np.allclose(sample.y, 4 * sample.x)
            return capce.fit_parametric(sample, capce.explicit_terms(["1"]),
                                        capce.InstrumentBasis(2), -1.0,
                                        (1e-10,), None)

        grid = make_grid((-1, 1, -1, 1), 2, 2)
        rep = bootstrap(ds, fit, b=10, seed=3, grid=grid)
        assert rep.b_successful == 10
        assert rep.coefficient_stats["1"]["max"] == pytest.approx(4.0, abs=1e-6)

    def test_failures_counted(self):
        ds = make_joint(60, 7)
        calls = {"n": 0}

        def fit(sample, _sel):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise np.linalg.LinAlgError("boom")
            return capce.fit_parametric(sample, capce.explicit_terms(["1"]),
                                        capce.InstrumentBasis(2), -1.0,
                                        (0.01,), None)

        grid = make_grid((-1, 1, -1, 1), 2, 2)
        rep = bootstrap(ds, fit, b=10, seed=4, grid=grid)
        assert rep.b_requested == 10
        assert 0 < rep.b_successful < 10

    def test_independent_resampling_when_not_joint(self):
        rng = np.random.default_rng(8)
        ds = TwoSampleDataset(x=rng.uniform(-1, 1, 30),
                              w=rng.uniform(-1, 1, (30, 1)),
                              z1=rng.uniform(-1, 1, 30),
                              y=rng.uniform(-1, 1, 20),
                              z2=rng.uniform(-1, 1, 20), joint=False)
        seen = []

        def fit(sample, _sel):
            seen.append((sample.n1, sample.n2))
            return capce.fit_parametric(sample, capce.explicit_terms(["1"]),
                                        capce.InstrumentBasis(2), None,
                                        (0.01,), None)

        grid = make_grid((-1, 1, -1, 1), 2, 2)
        bootstrap(ds, fit, b=3, seed=5, grid=grid)
        assert all(s == (30, 20) for s in seen[1:])


class TestReports:
    def test_emit_writes_all_formats(self, tmp_path):
        res = run_benchmark(_small_plan(reps=2))
        paths = emit_report(res, str(tmp_path))
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["curves_C_400.svg", "report.json", "results.csv",
                         "results.md"]
        payload = json.load(open(os.path.join(tmp_path, "report.json")))
        assert payload["summary"][0]["estimator"] == "P-CAPCE"

    def test_svg_contains_oracle_and_estimate(self, tmp_path):
        res = run_benchmark(_small_plan(settings=("A",), reps=1))
        emit_report(res, str(tmp_path))
        svg = open(os.path.join(tmp_path, "curves_A_400.svg")).read()
        assert svg.count("<polyline") == 2
        assert ">oracle<" in svg and ">P-CAPCE<" in svg
        # the oracle series at the default w = 1 is the line 20x + 2
        xs = res.plan.grid.x_points
        assert np.allclose(capce.true_capce("A", xs, 1.0), 20 * xs + 2)

    def test_svg_curves_deterministic(self):
        x = np.linspace(-2, 2, 5)
        s1 = svg_curves(x, {"oracle": 20 * x + 2, "est": 19 * x})
        s2 = svg_curves(x, {"oracle": 20 * x + 2, "est": 19 * x})
        assert s1 == s2
        assert "svg" in s1 and "stroke-dasharray" in s1

    def test_byte_identical_results_csv(self, tmp_path):
        res1 = run_benchmark(_small_plan(reps=2))
        res2 = run_benchmark(_small_plan(reps=2))
        emit_report(res1, str(tmp_path / "a"))
        emit_report(res2, str(tmp_path / "b"))
        a = open(tmp_path / "a" / "results.csv", "rb").read()
        b = open(tmp_path / "b" / "results.csv", "rb").read()
        assert a == b
