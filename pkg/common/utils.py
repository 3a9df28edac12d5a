import csv
import hashlib
import json
from pathlib import Path


def config_hash(mapping) -> str:
    """Short, stable hash of a configuration mapping (provenance header)"""
    canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def provenance_line(version: str, digest: str, seed) -> str:
    return f"# stochfrac {version} config={digest} seed={seed}"


def write_csv(path: Path, header: str, columns, rows) -> Path:
    """
    Write a CSV file: one '#' provenance line, a header row, then data.

    Comma separated, '.' decimal, LF line endings. Floats are written with
    repr() so reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(header + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
    return path


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return value
