import math

import numpy as np
import pandas as pd
import pytest
from pandas.testing import assert_series_equal

from commands import cmd_experiment
from components.reports import median_curve, monotone_with_slack, summarize_results
from database import get_db_session, load_results
from services.experiment import ExperimentConfig, ExperimentEngine, run_experiment
from services.model_kind import ModelKind
from utils.errors import ConfigError


def small_config(preset="2d", **overrides):
    settings = {"n_grid": (400,), "trials": 1, "max_workers": 1}
    settings.update(overrides)
    return ExperimentConfig.from_preset(preset, **settings)


class TestConfig:
    def test_preset_defaults(self):
        config = ExperimentConfig.from_preset("continuous-k1")
        assert config.model is ModelKind.NCCA
        assert config.allow_sign is True
        assert not ExperimentConfig.from_preset("20d").allow_sign

    def test_generator_overrides(self):
        config = ExperimentConfig.from_preset("20d", K=5, Ls=200.0, methods=("gencov",))
        assert config.generator["K"] == 5 and config.generator["Ls"] == 200.0

    @pytest.mark.parametrize("overrides", [
        {"n_grid": ()},
        {"trials": 0},
        {"n_grid": (2,)},
        {"delta_grid": (0.0,)},
        {"methods": ("tensor",)},
        {"max_workers": 0},
        {"model": "NCCA"},
    ])
    def test_invalid_settings(self, overrides):
        with pytest.raises(ConfigError):
            small_config(**overrides)

    def test_cumulant_needs_counts(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_preset("continuous-k1", methods=("cumulant",))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_preset("3d")


class TestEngine:
    def test_single_cell(self):
        frame = run_experiment(small_config(methods=("gencov",)))
        assert len(frame) == 1
        row = frame.iloc[0]
        assert row["method"] == "gencov" and row["N"] == 400 and row["trial"] == 1
        assert row["status"] in ("ok", "flagged")
        assert 0.0 <= row["err1"] <= 1.0

    def test_rows_per_method_and_delta(self):
        config = small_config(methods=("cumulant", "gencov", "baseline"), delta_grid=(0.05, 0.1), trials=2)
        frame = run_experiment(config)
        counts = frame.groupby("method").size()
        assert counts["gencov"] == 4 and counts["cumulant"] == 4 and counts["baseline"] == 2
        assert frame[frame["method"] == "baseline"]["delta"].isna().all()
        cumulant = frame[(frame["method"] == "cumulant") & (frame["trial"] == 1)]
        assert cumulant["err1"].nunique(dropna=False) == 1
        assert list(frame["method"]) == sorted(frame["method"])

    def test_deterministic_across_worker_counts(self):
        methods = ("gencov", "baseline")
        serial = run_experiment(small_config(methods=methods, n_grid=(300, 600), trials=2, seed=4))
        threaded = run_experiment(small_config(methods=methods, n_grid=(300, 600), trials=2, seed=4,
                                               max_workers=3))
        for column in ("method", "N", "trial", "err1", "sweeps"):
            assert_series_equal(serial[column], threaded[column])

    def test_failures_are_recorded(self):
        frame = run_experiment(small_config("20d", n_grid=(5,), methods=("gencov", "baseline")))
        failed = frame[frame["method"] == "gencov"].iloc[0]
        assert failed["status"] == "failed"
        assert math.isnan(failed["err1"])
        assert failed["message"]
        assert frame[frame["method"] == "baseline"]["status"].eq("ok").all()

    def test_instance_is_fixed_per_seed(self):
        first = ExperimentEngine(small_config("20d", seed=9)).instance
        second = ExperimentEngine(small_config("20d", seed=9)).instance
        np.testing.assert_array_equal(first.D1, second.D1)


class TestCommand:
    def test_writes_results_and_ledger(self, tmp_path):
        url = f"sqlite:///{tmp_path / 'runs.db'}"
        config = small_config(methods=("gencov", "baseline"), out_dir=tmp_path)
        results, summary = cmd_experiment(config, db_url=url)
        written = pd.read_csv(tmp_path / "results.csv")
        assert len(written) == len(results) == 2
        assert written["err1"].tolist() == results["err1"].tolist()
        assert (tmp_path / "summary.csv").is_file()
        assert set(summary["method"]) == {"gencov", "baseline"}

        session = get_db_session(url)
        try:
            stored = load_results(session, 1)
        finally:
            session.close()
        assert stored["err1"].tolist() == pytest.approx(results["err1"].tolist())


SWEEP_GRID = (500, 1000, 2000, 5000, 10000)
DELTA_SWEEP = (0.02, 0.05, 0.1, 0.2, 0.5)


def sweep(preset, methods, n_grid=SWEEP_GRID, trials=5, **overrides):
    config = ExperimentConfig.from_preset(preset, methods=methods, n_grid=n_grid, trials=trials,
                                          max_workers=4, **overrides)
    results = run_experiment(config)
    return results, summarize_results(results)


@pytest.mark.slow
class TestSyntheticSweeps:
    @pytest.mark.parametrize("preset", ["2d", "20d"])
    def test_discrete_errors_fall_with_sample_size(self, preset):
        _, summary = sweep(preset, ("cumulant", "gencov", "baseline"))
        baseline = median_curve(summary, "baseline")
        for method in ("cumulant", "gencov"):
            curve = median_curve(summary, method, 0.1)
            assert list(curve.index) == list(SWEEP_GRID)
            assert monotone_with_slack(curve.to_numpy())
            assert curve.loc[10000] <= 0.5 * baseline.loc[10000]

    @pytest.mark.parametrize("preset", ["continuous-k1", "continuous-k10"])
    def test_continuous_errors_fall_and_methods_agree(self, preset):
        _, summary = sweep(preset, ("gencov", "spectral", "baseline"))
        gencov = median_curve(summary, "gencov", 0.1)
        spectral = median_curve(summary, "spectral", 0.1)
        assert monotone_with_slack(gencov.to_numpy())
        assert gencov.loc[10000] < 0.5 * median_curve(summary, "baseline").loc[10000]
        assert abs(spectral.loc[10000] - gencov.loc[10000]) < 0.1

    def test_delta_sweep(self):
        results, summary = sweep("20d", ("gencov",), delta_grid=DELTA_SWEEP)
        moderate = results[results["delta"] <= 0.2]
        assert (moderate["status"] != "failed").all()
        assert moderate["dropped_points"].sum() == 0
        for delta in DELTA_SWEEP:
            curve = median_curve(summary, "gencov", delta)
            assert list(curve.index) == list(SWEEP_GRID)
            assert monotone_with_slack(curve.to_numpy())
