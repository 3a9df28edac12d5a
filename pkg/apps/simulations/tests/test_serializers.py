import pytest
from rest_framework import serializers

from apps.simulations.experiments import RunConfig
from apps.simulations.fluxes import FluxScheme
from apps.simulations.selectors import DESK_PATHS, STUDY_LAMBDAS
from apps.simulations.serializers import (
    RunConfigSerializer,
    merge_options,
    parse_config_file,
)


def validated(data):
    serializer = RunConfigSerializer(data=data)
    assert serializer.is_valid(), serializer.errors
    return serializer.save(), serializer.validated_data


def errors_for(data):
    serializer = RunConfigSerializer(data=data)
    assert not serializer.is_valid()
    return serializer.errors


class TestRunConfigSerializer:
    def test_builds_run_config(self):
        """String values from a file or the command line are converted"""
        config, data = validated(
            {"lambda": "0.3, 0.8", "paths": "10", "flux": "eo", "sigma": "off"}
        )
        assert isinstance(config, RunConfig)
        assert config.lambdas == (0.3, 0.8)
        assert config.n_paths == 10
        assert config.flux == FluxScheme.ENGQUIST_OSHER
        assert config.sigma_on is False
        assert data["trace"] is False

    def test_single_level_overrides(self):
        """dx, dt, K and imax map onto the RunConfig overrides"""
        config, _ = validated({"dx": "0.1", "dt": "0.025", "K": "30", "imax": "20"})
        assert (config.dx, config.dt, config.k_cells, config.i_max) == (
            0.1,
            0.025,
            30,
            20,
        )

    def test_short_horizon_snapshots(self):
        """T alone keeps the default snapshots before T and adds T"""
        config, _ = validated({"T": "0.5"})
        assert config.snapshot_times == (0.25, 0.5)

    def test_explicit_snapshots(self):
        """Snapshot times are sorted"""
        config, _ = validated({"snapshot_times": "1.0, 0.5"})
        assert config.snapshot_times == (0.5, 1.0)

    def test_unknown_key(self):
        """Unknown keys are named in the error"""
        errors = errors_for({"lambda": "0.5", "bogus": "1"})
        assert "bogus" in errors
        assert "Unknown configuration key." in errors["bogus"]

    @pytest.mark.parametrize(
        "data, field",
        [
            ({"lambda": "1.5"}, "lambda"),
            ({"lambda": "0.5, 0"}, "lambda"),
            ({"lambda": "a, b"}, "lambda"),
            ({"lambda": ""}, "lambda"),
            ({"paths": "0"}, "paths"),
            ({"seed": "-1"}, "seed"),
            ({"dx": "-0.1"}, "dx"),
            ({"flux": "roe"}, "flux"),
            ({"sigma": "maybe"}, "sigma"),
            ({"preset": "huge"}, "preset"),
            ({"problem": "heat"}, "problem"),
            ({"cfl_safety": "1.5"}, "cfl_safety"),
            ({"snapshot_times": "-0.25"}, "snapshot_times"),
            ({"snapshot_times": "0.25, 2"}, "snapshot_times"),
            ({"dt_levels": "0.1, 0"}, "dt_levels"),
        ],
    )
    def test_rejects(self, data, field):
        """Each invalid value is reported against its key"""
        assert field in errors_for(data)

    def test_lambda_as_list(self):
        """Preset values arrive as tuples"""
        config, _ = validated({"lambda": STUDY_LAMBDAS})
        assert config.lambdas == STUDY_LAMBDAS


class TestParseConfigFile:
    def test_comments_and_blanks(self, tmp_path):
        """'#' starts a comment; blank lines are skipped"""
        path = tmp_path / "run.cfg"
        path.write_text(
            "# study\n\nlambda = 0.3,0.5  # two orders\npaths=20\n  flux = llf\n"
        )
        assert parse_config_file(path) == {
            "lambda": "0.3,0.5",
            "paths": "20",
            "flux": "llf",
        }

    def test_malformed_line(self, tmp_path):
        """A line without '=' names its line number"""
        path = tmp_path / "run.cfg"
        path.write_text("paths = 20\nlambda 0.5\n")
        with pytest.raises(serializers.ValidationError) as exc:
            parse_config_file(path)
        assert "Line 2" in str(exc.value.detail["config"][0])

    def test_duplicate_key(self, tmp_path):
        """Keys appear once"""
        path = tmp_path / "run.cfg"
        path.write_text("paths = 20\npaths = 30\n")
        with pytest.raises(serializers.ValidationError):
            parse_config_file(path)

    def test_missing_file(self, tmp_path):
        """An unreadable file is a configuration error"""
        with pytest.raises(serializers.ValidationError) as exc:
            parse_config_file(tmp_path / "absent.cfg")
        assert "config" in exc.value.detail


class TestMergeOptions:
    def test_preset_only(self):
        """A preset fills paths and lambdas"""
        merged = merge_options({}, {"preset": "desk"})
        assert merged["paths"] == DESK_PATHS
        assert merged["lambda"] == STUDY_LAMBDAS

    def test_file_over_preset(self):
        """File values override the preset"""
        merged = merge_options({"preset": "desk", "paths": "50"}, {})
        assert merged["paths"] == "50"

    def test_flags_over_file(self):
        """Flags override the file; unset flags do not"""
        merged = merge_options(
            {"preset": "desk", "paths": "50", "seed": "3"},
            {"paths": 7, "seed": None},
        )
        assert merged["paths"] == 7
        assert merged["seed"] == "3"

    def test_flag_preset_wins(self):
        """A preset on the command line replaces the file's preset"""
        merged = merge_options({"preset": "paper-lambda05"}, {"preset": "desk"})
        assert merged["paths"] == DESK_PATHS
        assert merged["preset"] == "desk"

    def test_merged_options_validate(self):
        """The merged mapping feeds straight into the serializer"""
        config, _ = validated(merge_options({}, {"preset": "desk-lambda065"}))
        assert config.lambdas == (0.65,)
        assert config.n_paths == DESK_PATHS
