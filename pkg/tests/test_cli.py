import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from app import main
from commands import cmd_eval, cmd_fit, cmd_synth
from commands.ingest import cmd_ingest
from commands.synth import read_instance
from services.evaluation import stacked_l1_error
from services.pipeline import FitConfig, fit
from services.synthetic import FIXED2D_LOADING, FIXED2D_NOISE
from utils.data_io import read_json, read_loadings, write_dense_csv
from utils.errors import ConfigError, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION


def run(capsys, *argv):
    code = main([str(arg) for arg in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSynth:
    def test_fixed2d_instance_file(self, tmp_path):
        cmd_synth(tmp_path, preset="2d", N=50, trials=1, seed=1)
        instance = read_instance(tmp_path / "instance.json")
        assert_array_equal(instance.D1, FIXED2D_LOADING)
        assert_array_equal(instance.F1, FIXED2D_NOISE)
        assert (tmp_path / "trial1" / "view1.csv").is_file()

    def test_same_seed_gives_identical_files(self, tmp_path):
        first = cmd_synth(tmp_path / "a", preset="20d", N=40, trials=2, seed=4)
        second = cmd_synth(tmp_path / "b", preset="20d", N=40, trials=2, seed=4)
        for left, right in zip(first, second):
            assert left.read_bytes() == right.read_bytes()

    def test_zero_trials(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_synth(tmp_path, trials=0)

    def test_docword_output(self, tmp_path):
        cmd_synth(tmp_path, preset="20d", N=30, fmt="docword", seed=2)
        X1, X2 = cmd_ingest(tmp_path / "trial1" / "view1.txt", tmp_path / "trial1" / "view2.txt")
        assert X1.is_sparse and X1.N == X2.N

    def test_docword_needs_counts(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_synth(tmp_path, preset="continuous-k1", fmt="docword")


class TestFitCommand:
    def test_output_matches_in_memory_fit(self, tmp_path):
        cmd_synth(tmp_path / "data", preset="20d", N=3000, seed=0)
        data = tmp_path / "data"
        config = FitConfig(K=10, seed=0)
        result = cmd_fit(data / "trial1" / "view1.csv", data / "trial1" / "view2.csv", config,
                         tmp_path / "fit", truth=data / "instance.json", trace=True)
        D1, D2 = read_loadings(tmp_path / "fit")
        assert_array_equal(D1, result.loadings.D1)
        assert_array_equal(D2, result.loadings.D2)

        record = read_json(tmp_path / "fit" / "record.json")
        assert record["method"] == "gencov" and record["N"] == 3000
        trace = pd.read_csv(tmp_path / "fit" / "trace.csv")
        assert len(trace) == result.diagnostics.sweeps + 1

        X1, X2 = cmd_ingest(data / "trial1" / "view1.csv", data / "trial1" / "view2.csv")
        in_process = fit(X1, X2, config)
        instance = read_instance(data / "instance.json")
        expected = stacked_l1_error(in_process.loadings.D1, in_process.loadings.D2,
                                    instance.D1, instance.D2).error
        report = cmd_eval(tmp_path / "fit", data / "instance.json")
        assert abs(report["err1"] - expected) <= 1e-12
        assert abs(record["err1"] - expected) <= 1e-12

    def test_continuous_flag_rejected_by_cumulant(self, tmp_path):
        cmd_synth(tmp_path / "data", preset="20d", N=200, seed=0)
        data = tmp_path / "data" / "trial1"
        with pytest.raises(ConfigError):
            cmd_fit(data / "view1.csv", data / "view2.csv", FitConfig(K=10, method="cumulant"),
                    tmp_path / "fit", discrete=(False, False))


class TestMain:
    def test_synth_fit_eval(self, tmp_path, capsys):
        data, out = tmp_path / "data", tmp_path / "fit"
        code, stdout, _ = run(capsys, "synth", "--preset", "20d", "--N", 2000, "--seed", 3, "--out", data)
        assert code == EXIT_OK
        assert len(json.loads(stdout)["files"]) == 3

        code, stdout, _ = run(capsys, "fit", data / "trial1" / "view1.csv", data / "trial1" / "view2.csv",
                              "--K", 10, "--method", "gencov", "--out", out, "--seed", 3)
        assert code == EXIT_OK
        assert json.loads(stdout)["out"] == str(out)

        code, stdout, _ = run(capsys, "eval", out, data / "instance.json")
        assert code == EXIT_OK
        assert 0.0 <= json.loads(stdout)["err1"] <= 1.0

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        settings = tmp_path / "synth.env"
        settings.write_text("preset=20d\nN=100\ntrials=3\nseed=1\n")
        code, stdout, _ = run(capsys, "synth", "--config", settings, "--trials", 1, "--out", tmp_path / "d")
        assert code == EXIT_OK
        assert len(json.loads(stdout)["files"]) == 3

    def test_validation_exit_code(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "synth", "--trials", 0, "--out", tmp_path)
        assert code == EXIT_VALIDATION
        assert "trials" in stderr

    def test_usage_error_exit_code(self, capsys):
        code, _, _ = run(capsys, "fit")
        assert code == EXIT_VALIDATION

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "ingest", tmp_path / "missing.csv")
        assert code == EXIT_VALIDATION
        assert "missing.csv" in stderr

    def test_numerical_exit_code(self, tmp_path, capsys, rng):
        row = rng.poisson(3.0, size=200)
        write_dense_csv(tmp_path / "view1.csv", np.vstack([row, row, row]))
        write_dense_csv(tmp_path / "view2.csv", rng.poisson(3.0, size=(3, 200)))
        code, _, stderr = run(capsys, "fit", tmp_path / "view1.csv", tmp_path / "view2.csv",
                              "--K", 2, "--out", tmp_path / "fit")
        assert code == EXIT_NUMERICAL
        assert "[whitening]" in stderr

    def test_zero_view_is_a_validation_error(self, tmp_path, capsys, rng):
        write_dense_csv(tmp_path / "view1.csv", rng.poisson(3.0, size=(3, 200)))
        write_dense_csv(tmp_path / "view2.csv", np.zeros((3, 200), dtype=int))
        code, _, stderr = run(capsys, "fit", tmp_path / "view1.csv", tmp_path / "view2.csv",
                              "--K", 2, "--out", tmp_path / "fit")
        assert code == EXIT_VALIDATION
        assert "view 2 has only zero entries" in stderr

    @pytest.mark.parametrize("flag, value", [("--delta", "-0.1"), ("--K", "0"), ("--approx-delta", "0")])
    def test_non_positive_fit_settings(self, tmp_path, capsys, flag, value):
        code, _, stderr = run(capsys, "fit", tmp_path / "view1.csv", tmp_path / "view2.csv",
                              "--K", 2, flag, value)
        assert code == EXIT_VALIDATION
        assert "must be a positive number" in stderr

    def test_experiment_k_override(self, tmp_path, capsys):
        code, stdout, _ = run(capsys, "experiment", "--preset", "20d", "--K", 4, "--N-grid", 400,
                              "--trials", 1, "--methods", "gencov", "--max-workers", 1, "--out", tmp_path)
        assert code == EXIT_OK
        assert json.loads(stdout)["rows"] == 1
        assert set(pd.read_csv(tmp_path / "results.csv")["method"]) == {"gencov"}

    def test_ingest_describes_views(self, tmp_path, capsys):
        path = tmp_path / "docword.txt"
        path.write_text("1 1 2\n2 3 1\n")
        code, stdout, _ = run(capsys, "ingest", path)
        assert code == EXIT_OK
        assert json.loads(stdout)[str(path)] == {"M": 3, "N": 2, "nnz": 2, "discrete": True, "sparse": True}
