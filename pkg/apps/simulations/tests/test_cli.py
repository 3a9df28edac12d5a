import csv
import io
import math

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from apps.simulations.cli import main
from apps.simulations.services import SimulationService
from common.exceptions import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    NumericalAbort,
)

FROZEN_STUDY = """\
# deterministic study: nothing moves, only projection errors remain
problem = frozen
lambda = 0.5
paths = 2
half_width = 2.8125
T = 0.5625
snapshot_times = 0.5625
dt_ref = 0.00390625
dt_levels = 0.01171875, 0.03515625
mesh_ratio = 4
"""


def read_rows(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# stochfrac ")
    return list(csv.reader(lines[1:]))


class TestWeights:
    def test_half_order_table(self, tmp_path):
        """imax = 20 gives 21 rows, G_0 = (2/pi)(2 + 2 ln 2)"""
        code = main(
            ["weights", "--lambda", "0.5", "--dx", "0.1", "--imax", "20"]
            + ["--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        header, *rows = read_rows(tmp_path / "weights.csv")
        assert header == ["i", "G_i"]
        assert len(rows) == 21
        expected = (2.0 / math.pi) * (2.0 + 2.0 * math.log(2.0))
        assert rows[0][0] == "0"
        assert float(rows[0][1]) == pytest.approx(expected, rel=1e-13)
        assert all(float(g) < 0 for _, g in rows[1:])

    def test_default_imax(self, tmp_path):
        """Without imax the table reaches 2K"""
        assert main(["weights", "--dx", "0.25", "--out", str(tmp_path)]) == EXIT_OK
        _, *rows = read_rows(tmp_path / "weights.csv")
        assert len(rows) == 25


class TestSolve:
    def test_rerun_is_byte_identical(self, tmp_path):
        """Same configuration, same bytes"""
        args = ["solve", "--sigma", "off", "--lambda", "0.5", "--dx", "0.03125"]
        args += ["--T", "1"]
        assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        first = (tmp_path / "a" / "solve_profiles.csv").read_bytes()
        second = (tmp_path / "b" / "solve_profiles.csv").read_bytes()
        assert first == second
        header, *rows = read_rows(tmp_path / "a" / "solve_profiles.csv")
        assert header == ["t", "x", "u"]
        assert len(rows) == 4 * 193
        assert {row[0] for row in rows} == {"0.25", "0.5", "0.75", "1.0"}

    def test_noisy_path_with_trace(self, tmp_path, capsys):
        """--trace adds one row per step, initial state included"""
        code = main(
            ["solve", "--lambda", "0.5", "--dx", "0.125", "--T", "0.25"]
            + ["--seed", "3", "--trace", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        header, *rows = read_rows(tmp_path / "trace.csv")
        assert header == ["step", "t", "min", "max", "mass", "bv"]
        assert [int(row[0]) for row in rows] == list(range(9))
        assert "Wrote" in capsys.readouterr().out

    def test_provenance_line(self, tmp_path):
        """The first line records version, config hash and seed"""
        main(["solve", "--dx", "0.25", "--seed", "9", "--out", str(tmp_path)])
        first = (tmp_path / "solve_profiles.csv").read_text().splitlines()[0]
        assert first.startswith("# stochfrac 1.0.0 config=")
        assert first.endswith(" seed=9")

    def test_two_lambdas(self, tmp_path, capsys):
        """solve takes a single lambda"""
        code = main(["solve", "--lambda", "0.3,0.5", "--out", str(tmp_path)])
        assert code == EXIT_VALIDATION
        assert "exactly one lambda" in capsys.readouterr().err


class TestValidation:
    def test_unknown_config_key(self, tmp_path, capsys):
        """Exit 1 naming the offending key"""
        config = tmp_path / "run.cfg"
        config.write_text("lambda = 0.5\nbogus_key = 3\n")
        code = main(["weights", "--config", str(config), "--out", str(tmp_path)])
        assert code == EXIT_VALIDATION
        assert "bogus_key" in capsys.readouterr().err

    def test_bad_lambda(self, tmp_path, capsys):
        """lambda outside (0, 1)"""
        code = main(["weights", "--lambda", "1.5", "--out", str(tmp_path)])
        assert code == EXIT_VALIDATION
        assert "lambda" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        """An unreadable configuration file"""
        code = main(["rates", "--config", str(tmp_path / "absent.cfg")])
        assert code == EXIT_VALIDATION

    def test_unknown_subcommand(self):
        """Only the four subcommands exist"""
        assert main(["plot"]) == EXIT_VALIDATION

    def test_numerical_abort(self, tmp_path, monkeypatch):
        """A numerical abort exits with 2"""

        def explode(config, out_dir, trace=False):
            raise NumericalAbort("overflow", step_index=3, cell=0, path_id=0)

        monkeypatch.setattr(SimulationService, "solve", staticmethod(explode))
        code = main(["solve", "--dx", "0.25", "--out", str(tmp_path)])
        assert code == EXIT_NUMERICAL


class TestStudies:
    def test_rates_from_config_file(self, tmp_path):
        """A config file drives the error study"""
        config = tmp_path / "frozen.cfg"
        config.write_text(FROZEN_STUDY)
        assert main(["rates", "--config", str(config), "--out", str(tmp_path)]) == 0
        header, *rows = read_rows(tmp_path / "rates.csv")
        assert header == ["lambda", "dx", "error", "se", "rate"]
        assert [float(row[1]) for row in rows] == [0.046875, 0.140625]
        assert rows[0][4] == ""
        text = (tmp_path / "rates.txt").read_text()
        assert "lambda = 0.5 (1 paths)" in text

    def test_check_frozen(self, tmp_path):
        """Frozen dynamics pass every a priori check"""
        code = main(
            ["check", "--problem", "frozen", "--lambda", "0.5", "--dx", "0.25"]
            + ["--paths", "2", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        header, *rows = read_rows(tmp_path / "check.csv")
        assert header[-1] == "status"
        assert len(rows) == 20
        assert {row[2] for row in rows} == {
            "l1",
            "l2",
            "bv",
            "time_continuity",
            "max_principle",
        }
        assert {row[-1] for row in rows} == {"PASS"}
        assert "FAIL" not in (tmp_path / "check.txt").read_text()

    def test_check_levels_compares_overshoot(self, tmp_path):
        """Without a dx override every level is checked, then compared"""
        config = tmp_path / "frozen.cfg"
        config.write_text(FROZEN_STUDY)
        assert main(["check", "--config", str(config), "--out", str(tmp_path)]) == 0
        _, *rows = read_rows(tmp_path / "check.csv")
        assert len(rows) == 11
        (trend,) = [row for row in rows if row[2] == "overshoot_trend"]
        assert float(trend[0]) == 0.01171875
        assert trend[-1] == "PASS"
        text = (tmp_path / "check.txt").read_text()
        assert "overshoot across dt levels" in text


class TestManagementCommand:
    def test_call_command(self, tmp_path):
        """The same command runs through manage.py"""
        stdout = io.StringIO()
        call_command(
            "stochfrac",
            "weights",
            "--lambda",
            "0.3",
            "--dx",
            "0.05",
            "--imax",
            "5",
            "--out",
            str(tmp_path),
            stdout=stdout,
        )
        assert "weights.csv" in stdout.getvalue()
        _, *rows = read_rows(tmp_path / "weights.csv")
        assert len(rows) == 6

    def test_call_command_error(self, tmp_path):
        """Validation errors surface as CommandError with exit code 1"""
        with pytest.raises(CommandError) as exc:
            call_command(
                "stochfrac", "weights", "--lambda", "2", "--out", str(tmp_path)
            )
        assert exc.value.returncode == EXIT_VALIDATION
