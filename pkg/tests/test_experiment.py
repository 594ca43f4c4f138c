"""Campaign persistence, determinism, and report emission (fast configs
built on the linear family and tiny generated series)."""

import json

import numpy as np
import pytest

from quantforecast.errors import ConfigError
from quantforecast.evaluation import AggregateCell, AggregateReport
from quantforecast.experiment import (ExperimentConfig, build_series,
                                      emit_report, load_run_reports,
                                      parse_aggregate_csv, run_experiment)


def tiny_config(tmp_path, **kw):
    fields = dict(name="tiny", dataset="mackey-glass", family="linear",
                  quantile=True, runs=3, base_seed=0, data_steps=240,
                  window=5, horizons=3, linear_iterations=300,
                  linear_learning_rate=0.05, output_dir=str(tmp_path))
    fields.update(kw)
    return ExperimentConfig(**fields)


class TestConfigValidation:
    def test_multivariate_needs_market_data(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, strategy="multivariate")

    def test_unknown_family(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, family="mlp")

    def test_market_dataset_needs_path(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, dataset="bitcoin")

    def test_defaults_by_dataset_kind(self, tmp_path):
        benchmark = tiny_config(tmp_path, window=None, horizons=None)
        assert (benchmark.window, benchmark.horizons) == (5, 10)
        market = ExperimentConfig(
            name="m", dataset="bitcoin", family="edlstm",
            csv_path="x.csv", window=None, horizons=None,
            output_dir=str(tmp_path))
        assert (market.window, market.horizons) == (6, 5)

    def test_classic_model_forces_single_level(self, tmp_path):
        config = tiny_config(tmp_path, quantile=False)
        assert config.quantiles == (0.5,)

    def test_hash_ignores_output_location(self, tmp_path):
        a = tiny_config(tmp_path / "a")
        b = tiny_config(tmp_path / "b", workers=2)
        assert a.scientific_hash() == b.scientific_hash()
        c = tiny_config(tmp_path / "c", base_seed=99)
        assert a.scientific_hash() != c.scientific_hash()

    def test_roundtrip_through_dict(self, tmp_path):
        a = tiny_config(tmp_path)
        b = ExperimentConfig.from_dict(a.to_dict())
        assert a == b


class TestBuildSeries:
    def test_generated_series_pinned_by_data_seed(self, tmp_path):
        a = build_series(tiny_config(tmp_path, data_seed=5))
        b = build_series(tiny_config(tmp_path, data_seed=5))
        c = build_series(tiny_config(tmp_path, data_seed=6))
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_lorenz_downsampling(self, tmp_path):
        config = tiny_config(tmp_path, dataset="lorenz", data_steps=900,
                             data_stride=3, data_limit=250)
        series = build_series(config)
        assert series.length == 250

    def test_univariate_strategy_on_market_csv(self, tmp_path):
        csv = tmp_path / "m.csv"
        rows = ["Date,High,Low,Open,Close,Volume"]
        rows += [f"2020-01-{i + 1:02d},{i + 2},{i},{i + 1},{i + 1.5},100"
                 for i in range(30)]
        csv.write_text("\n".join(rows) + "\n")
        config = ExperimentConfig(
            name="u", dataset="csv", family="linear", strategy="univariate",
            csv_path=str(csv), window=4, horizons=2, runs=1,
            output_dir=str(tmp_path))
        series = build_series(config)
        assert series.values.shape[1] == 1  # close only


class TestRunExperiment:
    def test_artifacts_written(self, tmp_path):
        config = tiny_config(tmp_path)
        aggregate = run_experiment(config)
        assert aggregate.runs_completed == 3
        assert (tmp_path / "config.json").exists()
        assert sorted(p.name for p in (tmp_path / "runs").glob("*.json")) == [
            "run_0.json", "run_1.json", "run_2.json"]
        assert (tmp_path / "aggregate.csv").exists()
        assert (tmp_path / "table.csv").exists()
        assert (tmp_path / "per_horizon_rmse.csv").exists()
        assert len(list((tmp_path / "traces").glob("trace_*.csv"))) == 3

    def test_fixed_seeds_reproduce_identical_aggregate_bytes(self, tmp_path):
        run_experiment(tiny_config(tmp_path / "one"))
        run_experiment(tiny_config(tmp_path / "two"))
        first = (tmp_path / "one" / "aggregate.csv").read_bytes()
        second = (tmp_path / "two" / "aggregate.csv").read_bytes()
        assert first == second

    def test_seed_list_is_contiguous_from_base(self, tmp_path):
        config = tiny_config(tmp_path, base_seed=10, runs=2)
        run_experiment(config)
        reports = load_run_reports(tmp_path / "runs")
        assert [r.seed for r in reports] == [10, 11]

    def test_reaggregation_matches_fresh_aggregate(self, tmp_path):
        config = tiny_config(tmp_path)
        aggregate = run_experiment(config)
        from quantforecast.evaluation import aggregate_runs
        again = aggregate_runs(load_run_reports(tmp_path / "runs"))
        assert again.mean_rmse.mean == pytest.approx(aggregate.mean_rmse.mean,
                                                     abs=0)

    def test_parallel_workers_match_sequential_aggregate(self, tmp_path):
        run_experiment(tiny_config(tmp_path / "seq"))
        run_experiment(tiny_config(tmp_path / "par", workers=2))
        sequential = (tmp_path / "seq" / "aggregate.csv").read_bytes()
        parallel = (tmp_path / "par" / "aggregate.csv").read_bytes()
        assert sequential == parallel

    def test_quantile_deep_run_emits_diagnostics(self, tmp_path):
        config = tiny_config(tmp_path, family="edlstm", hidden1=3, hidden2=3,
                             epochs=2, runs=1, batch_size=32,
                             learning_rate=1e-3)
        with pytest.warns(UserWarning, match="single run"):
            run_experiment(config)
        report = load_run_reports(tmp_path / "runs")[0]
        assert report.coverage_05_95 is not None
        assert report.crossing is not None
        assert len(report.per_quantile_rmse) == 5


class TestEmitReport:
    def make_aggregate(self):
        return AggregateReport(
            runs_requested=5, runs_completed=5, quantiles=(0.05, 0.5, 0.95),
            mean_rmse=AggregateCell(0.0112, 0.0005),
            per_horizon=[AggregateCell(0.011 + 0.001 * j, 0.0003)
                         for j in range(5)],
            per_quantile=[AggregateCell(0.0226, 0.0028),
                          AggregateCell(0.0112, 0.0008),
                          AggregateCell(0.0206, 0.0023)])

    def test_wide_table_has_mean_and_step_columns(self, tmp_path):
        emit_report(self.make_aggregate(), "csv", tmp_path)
        header = (tmp_path / "table.csv").read_text().splitlines()[0]
        assert header.split(",") == ["Mean", "Step 1", "Step 2", "Step 3",
                                     "Step 4", "Step 5"]

    def test_csv_roundtrip_exact(self, tmp_path):
        aggregate = self.make_aggregate()
        emit_report(aggregate, "csv", tmp_path,
                    label={"model": "edlstm", "strategy": "multivariate",
                           "quantile": "yes"})
        parsed = parse_aggregate_csv(tmp_path / "aggregate.csv")
        assert parsed["mean_rmse"][""] == (0.0112, 0.0005)
        assert parsed["horizon_rmse"]["step 3"][0] == aggregate.per_horizon[2].mean
        assert parsed["quantile_rmse"]["0.05"] == (0.0226, 0.0028)

    def test_svg_written(self, tmp_path):
        paths = emit_report(self.make_aggregate(), "svg-plot-data", tmp_path)
        text = paths[0].read_text()
        assert text.startswith("<svg")
        assert "Step 5" in text

    def test_empty_aggregate_header_only(self, tmp_path):
        empty = AggregateReport(
            runs_requested=0, runs_completed=0, quantiles=(0.5,),
            mean_rmse=AggregateCell(0.0, 0.0), per_horizon=[],
            per_quantile=[])
        emit_report(empty, "csv", tmp_path)
        lines = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("model,")
        assert len((tmp_path / "table.csv").read_text().splitlines()) == 1
        emit_report(empty, "svg-plot-data", tmp_path)
        assert (tmp_path / "report.svg").read_text().startswith("<svg")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_report(self.make_aggregate(), "pdf", tmp_path)

    def test_unwritable_path(self, tmp_path):
        from quantforecast.errors import IoError
        blocked = tmp_path / "file"
        blocked.write_text("x")
        with pytest.raises(IoError):
            emit_report(self.make_aggregate(), "csv", blocked / "sub")


class TestFailureHandling:
    def test_failed_runs_recorded_capaign_continues(self, tmp_path, monkeypatch):
        import quantforecast.experiment as exp

        original = exp.run_single
        def flaky(config, series, seed):
            if seed == 1:
                raise RuntimeError("synthetic failure")
            return original(config, series, seed)

        monkeypatch.setattr(exp, "run_single", flaky)
        config = tiny_config(tmp_path)
        aggregate = run_experiment(config)
        assert aggregate.runs_completed == 2
        assert aggregate.runs_requested == 3
        failures = json.loads((tmp_path / "failures.json").read_text())
        assert failures[0]["seed"] == 1
        assert "synthetic failure" in failures[0]["error"]
