# test_dataset_io.py
import numpy as np
import pandas as pd
import pytest

from dataset_io import (experiment_spec_from_config, load_dataset_csv, parse_config_file, write_dataset_csv,
                        write_experiment_outputs)
from dgp import Dataset, ErrorSpec, LinkSpec, MultiDataset, simulate_binary, simulate_multi_index
from geometry import Direction
from helper_functions import DatasetFormatError, ValidationError


def _write(tmp_path, text, name='data.csv'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadDataset:
    def test_two_point_file(self, tmp_path):
        data = load_dataset_csv(_write(tmp_path, "y,x1,x2\n1,0.5,0.0\n0,-0.5,0.0\n"))
        assert isinstance(data, Dataset)
        assert data.n == 2 and data.d == 2
        np.testing.assert_array_equal(data.y, [1.0, 0.0])

    def test_row_outside_ball(self, tmp_path):
        with pytest.raises(DatasetFormatError) as info:
            load_dataset_csv(_write(tmp_path, "y,x1,x2\n1,0.9,0.9\n0,-0.5,0.0\n"))
        assert info.value.rows == [1]

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(DatasetFormatError) as info:
            load_dataset_csv(_write(tmp_path, "y,x1,x2\n1,0.1,0.1\n0,abc,0.0\n1,0.2,\n"))
        assert info.value.rows == [2, 3]

    def test_non_binary_outcome(self, tmp_path):
        with pytest.raises(DatasetFormatError) as info:
            load_dataset_csv(_write(tmp_path, "y,x1,x2\n2,0.1,0.1\n"))
        assert info.value.rows == [1]

    @pytest.mark.parametrize("header", ["y,x1", "y,x2,x1", "y,x1,z", "x1,x2,y", "y,x1_1,x1_2"])
    def test_malformed_header(self, tmp_path, header):
        with pytest.raises(DatasetFormatError):
            load_dataset_csv(_write(tmp_path, header + "\n" + ",".join(["0"] * len(header.split(","))) + "\n"))

    def test_multi_index_header(self, tmp_path):
        data = load_dataset_csv(_write(tmp_path, "y,x1_1,x1_2,x2_1,x2_2\n0.3,0.1,0.2,-0.3,0.4\n-1.5,0,0,0.5,0.5\n"))
        assert isinstance(data, MultiDataset)
        assert (data.n, data.J, data.d) == (2, 2, 2)
        np.testing.assert_array_equal(data.X[0], [[0.1, 0.2], [-0.3, 0.4]])

    def test_errors_are_validation_errors(self):
        assert issubclass(DatasetFormatError, ValidationError)


class TestWriteDataset:
    def test_single_index_round_trip_is_exact(self, tmp_path, rng):
        data = simulate_binary(50, 3, Direction.from_vector([1, 2, 3]), ErrorSpec(), rng)
        path = str(tmp_path / "out.csv")
        write_dataset_csv(data, path)
        again = load_dataset_csv(path)
        np.testing.assert_array_equal(again.X, data.X)
        np.testing.assert_array_equal(again.y, data.y)

    def test_multi_index_columns(self, tmp_path, rng):
        data = simulate_multi_index(10, 2, 2, Direction.from_vector([1, 1]), LinkSpec(), 0.25, rng)
        path = str(tmp_path / "mmi.csv")
        write_dataset_csv(data, path)
        with open(path) as handle:
            assert handle.readline().strip() == "y,x1_1,x1_2,x2_1,x2_2"
        np.testing.assert_array_equal(load_dataset_csv(path).X, data.X)


class TestConfig:
    def test_parse(self, tmp_path):
        path = _write(tmp_path, "# header\nestimator = sms\nd=3  # inline\n\nn_grid = 100, 200, 400, 800\n",
                      name='run.cfg')
        assert parse_config_file(path) == {'estimator': 'sms', 'd': '3', 'n_grid': '100, 200, 400, 800'}

    def test_duplicate_and_malformed_lines(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_config_file(_write(tmp_path, "d = 2\nd = 3\n", name='dup.cfg'))
        with pytest.raises(ValidationError):
            parse_config_file(_write(tmp_path, "just words\n", name='bad.cfg'))

    def test_spec_from_config(self):
        spec = experiment_spec_from_config({
            'estimator': 'sms', 'd': '3', 'n_grid': '100,200,400,800', 'replications': '60',
            'error': 'gaussian', 'error_scale': '0.5', 'seed': '9', 'resolution': '500',
        })
        assert spec.estimator == 'sms' and spec.d == 3
        assert spec.n_grid == (100, 200, 400, 800)
        assert spec.error == ErrorSpec('gaussian', 0.5)
        assert spec.base_seed == 9
        assert spec.optimizer.resolution == 500

    def test_unknown_key(self):
        with pytest.raises(ValidationError, match='colour'):
            experiment_spec_from_config({'estimator': 'ms', 'colour': 'blue'})

    def test_unparsable_value(self):
        with pytest.raises(ValidationError, match="'d'"):
            experiment_spec_from_config({'d': 'three'})


def test_experiment_outputs(tmp_path):
    from experiments import ExperimentSpec, run_rate_experiment
    spec = ExperimentSpec(estimator='ms', n_grid=(40, 60, 80, 100), replications=50,
                          theta0=Direction.from_vector([1, 1]))
    result = run_rate_experiment(spec, workers=1)
    json_path, csv_path = str(tmp_path / "r.json"), str(tmp_path / "r.csv")
    write_experiment_outputs(result, json_path, csv_path)
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ['n', 'median', 'q25', 'q75', 'mean']
    assert list(frame['n']) == [40, 60, 80, 100]
    with open(json_path) as handle:
        assert '"slope"' in handle.read()
