import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from commands.ingest import cmd_ingest, read_view
from utils.data_io import (
    read_dense_csv, read_docword, read_json, read_loadings, to_jsonable, write_dense_csv,
    write_docword, write_json, write_loadings,
)
from utils.errors import ConfigError, DataFormatError, DimensionError


class TestDenseCsv:
    def test_integer_round_trip_is_exact(self, tmp_path, rng):
        X = rng.poisson(4.0, size=(3, 7))
        path = write_dense_csv(tmp_path / "view.csv", X)
        assert path.read_text().splitlines()[0] == "3,7"
        assert_array_equal(read_dense_csv(path), X)

    def test_float_round_trip_is_bitwise(self, tmp_path, rng):
        X = rng.standard_normal((4, 5)) * 1e-3
        assert_array_equal(read_dense_csv(write_dense_csv(tmp_path / "view.csv", X)), X)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("2,3\n1,2,3\n")
        with pytest.raises(DataFormatError):
            read_dense_csv(path)

    def test_missing_entry_reports_line(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("2,2\n1,2\n3,\n")
        with pytest.raises(DataFormatError) as info:
            read_dense_csv(path)
        assert info.value.line == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataFormatError):
            read_dense_csv(path)


class TestDocword:
    def test_triplets_parse_into_sparse_view(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("1 1 2\n2 3 1\n")
        view = read_view(path, M=3)
        assert view.is_sparse and view.discrete
        variables, samples, counts, shape = read_docword(path, M=3)
        assert shape == (3, 2)
        dense = np.zeros(shape)
        dense[variables, samples] = counts
        assert_array_equal(dense, [[2, 0], [0, 0], [0, 1]])

    def test_uci_header(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("4\n5\n2\n1 2 3\n4 5 1\n")
        variables, samples, counts, shape = read_docword(path)
        assert shape == (5, 4)
        assert_array_equal(counts, [3, 1])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("")
        with pytest.raises(DataFormatError, match="empty data"):
            read_docword(path)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("1 1 2\n1 x 2\n")
        with pytest.raises(DataFormatError) as info:
            read_docword(path)
        assert info.value.line == 2

    def test_negative_count(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("1 1 -2\n")
        with pytest.raises(DataFormatError):
            read_docword(path)

    def test_write_then_read(self, tmp_path, rng):
        X = rng.poisson(1.0, size=(4, 6))
        X[:, -1] = 0
        X[0, -1] = 1
        path = write_docword(tmp_path / "out.txt", X)
        variables, samples, counts, shape = read_docword(path, M=4)
        dense = np.zeros(shape)
        dense[variables, samples] = counts
        assert_array_equal(dense, X)


class TestIngest:
    def test_pair_must_be_aligned(self, tmp_path, rng):
        write_dense_csv(tmp_path / "a.csv", rng.poisson(2.0, size=(3, 5)))
        write_dense_csv(tmp_path / "b.csv", rng.poisson(2.0, size=(3, 4)))
        with pytest.raises(DimensionError):
            cmd_ingest(tmp_path / "a.csv", tmp_path / "b.csv")

    def test_continuous_flag(self, tmp_path, rng):
        write_dense_csv(tmp_path / "a.csv", rng.poisson(2.0, size=(3, 5)))
        assert cmd_ingest(tmp_path / "a.csv").discrete
        assert not cmd_ingest(tmp_path / "a.csv", discrete=(False, None)).discrete

    def test_docword_cannot_be_continuous(self, tmp_path):
        path = tmp_path / "docword.txt"
        path.write_text("1 1 2\n")
        with pytest.raises(ConfigError):
            read_view(path, discrete=False)


class TestJsonAndLoadings:
    def test_loadings_round_trip_is_bitwise(self, tmp_path, rng):
        D1, D2 = rng.dirichlet(np.ones(5), size=3).T, rng.dirichlet(np.ones(4), size=3).T
        out = write_loadings(tmp_path / "fit", D1, D2, {"sweeps": 3}, {"err1": None})
        restored1, restored2 = read_loadings(out)
        assert_array_equal(restored1, D1)
        assert_array_equal(restored2, D2)
        assert read_json(out / "diagnostics.json") == {"sweeps": 3}

    def test_jsonable_conversion(self, tmp_path):
        payload = {"array": np.arange(3), "scalar": np.float64(1.5), "tuple": (1, 2), "nan": math.nan}
        restored = read_json(write_json(tmp_path / "x.json", payload))
        assert restored["array"] == [0, 1, 2]
        assert restored["scalar"] == 1.5
        assert math.isnan(restored["nan"])
        assert to_jsonable((np.int64(2),)) == [2]

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(DataFormatError):
            read_json(path)
