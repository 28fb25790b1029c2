"""On-disk sample directories: ``<root>/<id>/{y,x,i,metal,li}.osct`` plus ``manifest.csv``."""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import load_osct, save_osct

__all__ = [
    "MANIFEST",
    "MANIFEST_FIELDS",
    "Record",
    "sample_id",
    "write_sample",
    "read_manifest",
    "write_manifest",
    "load_sample",
    "write_run_config",
]

MANIFEST = "manifest.csv"
MANIFEST_FIELDS = ("id", "seed", "severity", "metal_pixels")
RUN_CONFIG = "run.config"


@dataclass(frozen=True)
class Record:
    id: str
    seed: int
    severity: float
    metal_pixels: int


def sample_id(index):
    return f"{index:04d}"


def write_sample(root, sid, **images):
    """Write each keyword array as ``<root>/<sid>/<name>.osct``."""
    folder = Path(root) / sid
    folder.mkdir(parents=True, exist_ok=True)
    for name, array in images.items():
        save_osct(folder / f"{name}.osct", array)
    return folder


def write_manifest(root, records):
    with open(Path(root) / MANIFEST, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in records:
            writer.writerow([r.id, r.seed, repr(float(r.severity)), r.metal_pixels])


def read_manifest(root):
    """Records of ``<root>/manifest.csv`` in file order; ``FileNotFoundError`` if absent."""
    path = Path(root) / MANIFEST
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(MANIFEST_FIELDS)}")
        return [Record(row["id"], int(row["seed"]), float(row["severity"]), int(row["metal_pixels"]))
                for row in reader]


def load_sample(root, sid, names=("y", "x", "i")):
    """Tuple of arrays ``<root>/<sid>/<name>.osct`` in the order of ``names``."""
    folder = Path(root) / sid
    return tuple(load_osct(folder / f"{name}.osct") for name in names)


def write_run_config(folder, params):
    """Persist ``params`` as sorted ``key=value`` lines in ``<folder>/run.config``."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_text(value)}" for key, value in sorted(params.items())]
    (folder / RUN_CONFIG).write_text("\n".join(lines) + "\n")
    return folder / RUN_CONFIG


def _text(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Path):
        return str(value)
    if value is None:
        return ""
    return str(value)
