import re
from pathlib import Path

from rest_framework import serializers

from .experiments import RunConfig
from .fluxes import FLUX_ALIASES, FluxScheme
from .selectors import PRESETS, PROBLEMS
from .stepper import DEFAULT_SNAPSHOT_TIMES

CONFIG_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

# configuration key -> RunConfig field
RUN_CONFIG_FIELDS = {
    "seed": "seed",
    "paths": "n_paths",
    "lambda": "lambdas",
    "dx": "dx",
    "dt": "dt",
    "T": "T",
    "K": "k_cells",
    "flux": "flux",
    "sigma": "sigma_on",
    "threads": "threads",
    "imax": "i_max",
    "half_width": "half_width",
    "dt_ref": "dt_ref",
    "dt_levels": "dt_levels",
    "mesh_ratio": "mesh_ratio",
    "quad_order": "quad_order",
    "cfl_safety": "cfl_safety",
    "problem": "problem",
    "snapshot_times": "snapshot_times",
}


def positive(value):
    if not value > 0:
        raise serializers.ValidationError("Ensure this value is greater than 0.")


class FloatListField(serializers.Field):
    """A comma separated list of numbers, or a list/tuple of them"""

    default_error_messages = {
        "invalid": "Expected a comma-separated list of numbers.",
        "empty": "This list may not be empty.",
    }

    def to_internal_value(self, data):
        if isinstance(data, str):
            items = [item.strip() for item in data.split(",") if item.strip()]
        elif isinstance(data, list | tuple):
            items = list(data)
        elif isinstance(data, int | float) and not isinstance(data, bool):
            items = [data]
        else:
            self.fail("invalid")
        if not items:
            self.fail("empty")
        try:
            return tuple(float(item) for item in items)
        except (TypeError, ValueError):
            self.fail("invalid")

    def to_representation(self, value):
        return ",".join(repr(float(v)) for v in value)


class RunConfigSerializer(serializers.Serializer):
    """
    Validates a merged configuration (preset < file < flags) and builds a
    RunConfig from it. ``out`` and ``trace`` stay in validated_data for
    the service layer.
    """

    seed = serializers.IntegerField(required=False, min_value=0, max_value=2**64 - 1)
    paths = serializers.IntegerField(required=False, min_value=1)
    dx = serializers.FloatField(required=False, validators=[positive])
    dt = serializers.FloatField(required=False, validators=[positive])
    T = serializers.FloatField(required=False, validators=[positive])
    K = serializers.IntegerField(required=False, min_value=1)
    flux = serializers.ChoiceField(
        required=False, choices=[*FluxScheme.values, *FLUX_ALIASES]
    )
    sigma = serializers.ChoiceField(required=False, choices=["on", "off"])
    preset = serializers.ChoiceField(required=False, choices=list(PRESETS))
    out = serializers.CharField(required=False)
    threads = serializers.IntegerField(required=False, min_value=1)
    trace = serializers.BooleanField(required=False, default=False)
    imax = serializers.IntegerField(required=False, min_value=1)
    half_width = serializers.FloatField(required=False, validators=[positive])
    dt_ref = serializers.FloatField(required=False, validators=[positive])
    mesh_ratio = serializers.FloatField(required=False, validators=[positive])
    quad_order = serializers.IntegerField(required=False, min_value=1, max_value=20)
    cfl_safety = serializers.FloatField(required=False, validators=[positive])
    problem = serializers.ChoiceField(required=False, choices=list(PROBLEMS))
    snapshot_times = FloatListField(required=False)
    dt_levels = FloatListField(required=False)

    def get_fields(self):
        # "lambda" is a keyword, so it cannot be declared as a class attribute
        fields = super().get_fields()
        fields["lambda"] = FloatListField(required=False)
        return fields

    def to_internal_value(self, data):
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError(
                {key: ["Unknown configuration key."] for key in unknown}
            )
        return super().to_internal_value(data)

    def validate_lambda(self, value):
        for lam in value:
            if not (0.0 < lam < 1.0):
                raise serializers.ValidationError(
                    f"Ensure every lambda lies in (0, 1), got {lam}."
                )
        return value

    def validate_cfl_safety(self, value):
        if value > 1:
            raise serializers.ValidationError("Ensure this value is at most 1.")
        return value

    def validate_snapshot_times(self, value):
        if any(t < 0 for t in value):
            raise serializers.ValidationError("Snapshot times must be non-negative.")
        return value

    def validate_dt_levels(self, value):
        if any(not dt > 0 for dt in value):
            raise serializers.ValidationError("Time step levels must be positive.")
        return value

    def validate(self, attrs):
        T = attrs.get("T", 1.0)
        late = [t for t in attrs.get("snapshot_times", ()) if t > T]
        if late:
            raise serializers.ValidationError(
                {"snapshot_times": [f"Snapshot times {late} lie beyond T={T}."]}
            )
        return attrs

    def create(self, validated_data):
        values = {
            RUN_CONFIG_FIELDS[key]: value
            for key, value in validated_data.items()
            if key in RUN_CONFIG_FIELDS
        }
        if "flux" in values:
            values["flux"] = FluxScheme.parse(values["flux"])
        if "sigma_on" in values:
            values["sigma_on"] = values["sigma_on"] == "on"
        if "snapshot_times" not in values and "T" in values:
            T = values["T"]
            earlier = tuple(t for t in DEFAULT_SNAPSHOT_TIMES if t < T)
            values["snapshot_times"] = (*earlier, T)
        return RunConfig(**values)


def parse_config_file(path) -> dict[str, str]:
    """
    Read a flat ``key = value`` file. Blank lines and '#' comments are
    skipped; values stay strings for the serializer to convert.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise serializers.ValidationError(
            {"config": [f"Cannot read {path}: {exc.strerror}"]}
        ) from exc

    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = CONFIG_LINE.match(line)
        if match is None:
            raise serializers.ValidationError(
                {"config": [f"Line {number}: expected 'key = value', got {raw!r}"]}
            )
        key, value = match.groups()
        if key in values:
            raise serializers.ValidationError(
                {"config": [f"Line {number}: duplicate key '{key}'"]}
            )
        values[key] = value
    return values


def merge_options(file_values=None, flags=None) -> dict:
    """
    Layer preset values, then the config file, then command-line flags.
    A preset named on the command line wins over one named in the file.
    """
    file_values = dict(file_values or {})
    flags = {key: value for key, value in (flags or {}).items() if value is not None}
    preset = flags.get("preset", file_values.get("preset"))

    merged = {}
    if preset is not None and preset in PRESETS:
        merged.update(PRESETS[preset])
    merged.update(file_values)
    merged.update(flags)
    return merged
