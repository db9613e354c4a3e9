"""
This module provides test cases for the command line interface.
"""

import pytest

from stochrk.cli import main
from stochrk.constants import Constants
from stochrk.tableau import builtin_rk4, serialize_tableau

verbose = False

EXAMPLE_ARGS = ['example', 'absorber', '--n-levels', '4', '--horizon', '0.5', '--chunks', '2',
                '--rtol', '1e-6', '--atol', '1e-8', '--seed', '3']

def slope_of(stdout: str) -> float:
    line = stdout.strip().splitlines()[-1]
    assert line.startswith("slope=")
    return float(line.split()[0].split('=')[1])

class TestValidate:

    @pytest.mark.parametrize("name", ['rk4', 'dopri5', 'rk87'])
    def test_builtin_tableaus_pass(self, name, capsys):
        assert main(['validate', '--tableau', name]) == Constants.EXIT_OK
        assert f"OK: {name}" in capsys.readouterr().out

    def test_corrupted_tableau_fails(self, tmp_path, capsys):
        text = serialize_tableau(builtin_rk4()).replace("c 0 0.5 0.5 1", "c 0 0.501 0.5 1")
        path = tmp_path / "bad.txt"
        path.write_text(text)
        assert main(['validate', '--tableau', str(path)]) == Constants.EXIT_VALIDATION_FAILED
        out = capsys.readouterr().out
        assert "FAIL" in out
        assert "row-sum" in out

    def test_unparseable_tableau_fails(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("name broken\norder four 0\n")
        assert main(['validate', '--tableau', str(path)]) == Constants.EXIT_VALIDATION_FAILED
        assert "line 2" in capsys.readouterr().out

    def test_missing_tableau_file(self, tmp_path, capsys):
        path = tmp_path / "nowhere.txt"
        assert main(['validate', '--tableau', str(path)]) == Constants.EXIT_IO_ERROR
        assert str(path) in capsys.readouterr().err

class TestConverge:

    def test_rk4_slope(self, tmp_path, capsys):
        out = tmp_path / "rk4.csv"
        code = main(['converge', '--tableau', 'rk4', '--paths', '500', '--levels', '4',
                     '--out', str(out)])
        assert code == Constants.EXIT_OK
        assert abs(slope_of(capsys.readouterr().out) - 2.0) <= 0.35
        lines = out.read_text().splitlines()
        header = [line for line in lines if line.startswith('#')]
        assert "# command=converge gbm" in header
        assert "# tableau=rk4" in header
        body = [line for line in lines if not line.startswith('#')]
        assert body[0] == "h,mean_error,n_paths"
        assert len(body) == 5

    def test_deterministic_slope(self, capsys):
        code = main(['converge', '--tableau', 'rk4', '--sigma', '0', '--mu', '-1',
                     '--h-max', '0.25', '--levels', '4', '--paths', '5'])
        assert code == Constants.EXIT_OK
        assert abs(slope_of(capsys.readouterr().out) - 4.0) <= 0.2

    def test_too_few_levels(self, capsys):
        assert main(['converge', '--levels', '2']) == Constants.EXIT_CONFIG_ERROR
        assert "levels" in capsys.readouterr().err

class TestExample:

    def test_output_is_reproducible(self, tmp_path):
        first = tmp_path / "first.csv"
        second = tmp_path / "second.csv"
        assert main(EXAMPLE_ARGS + ['--trajectories', '1', '--out', str(first)]) == 0
        assert main(EXAMPLE_ARGS + ['--trajectories', '1', '--out', str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        lines = first.read_text().splitlines()
        body = [line for line in lines if not line.startswith('#')]
        assert body[0] == "t,n_mc,n_se,n_oracle,norm_mc"
        assert body[1].startswith("0,0,")
        assert len(body) == 4
        assert "# master_seed=3" in lines

    @pytest.mark.parametrize("workers", [4, 16])
    def test_worker_count_does_not_change_output(self, tmp_path, workers):
        serial = tmp_path / "serial.csv"
        parallel = tmp_path / "parallel.csv"
        args = EXAMPLE_ARGS + ['--trajectories', '8']
        assert main(args + ['--workers', '1', '--out', str(serial)]) == 0
        assert main(args + ['--workers', str(workers), '--out', str(parallel)]) == 0
        assert serial.read_bytes() == parallel.read_bytes()

    def test_example_needs_embedded_pair(self, capsys):
        assert main(EXAMPLE_ARGS + ['--tableau', 'rk4']) == Constants.EXIT_CONFIG_ERROR
        assert "embedded" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("rtol = 1e-6\nspeed = 3\n")
        assert main(EXAMPLE_ARGS + ['--config', str(path)]) == Constants.EXIT_CONFIG_ERROR
        assert ":2:" in capsys.readouterr().err

    def test_numerical_abort(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("max_rejects = 1\n")
        args = ['example', 'absorber', '--n-levels', '4', '--horizon', '1', '--chunks', '1',
                '--trajectories', '1', '--rtol', '1e-30', '--atol', '0', '--config', str(path)]
        assert main(args) == Constants.EXIT_NUMERICAL_ABORT
        assert "numerical abort" in capsys.readouterr().err
