"""CSV emission and run manifests.

All result tables are written with a pinned header and ``repr`` float
formatting, so a repeated run with the same configuration and seed produces
byte-identical files.  Wall-clock timing lives in the manifest only, which
is the one file allowed to differ between identical runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .linksim import ExperimentResult

SCHEMA_VERSION = 1

NMSE_HEADER = ["waveform", "estimator", "snr_db", "nmse_mean", "trials_valid", "trials_ambiguous"]
BER_HEADER = ["waveform", "estimator", "snr_db", "bit_errors", "bits_counted", "ber"]
COP_HEADER = ["waveform", "cop_enumerated", "cop_monte_carlo", "trials"]
MIP_HEADER = ["waveform", "num_pilots", "mip", "num_atoms"]
DIVERSITY_HEADER = ["waveform", "effective_rank", "occurrences", "fraction"]
PEP_HEADER = ["waveform", "pep_bound", "ccdf"]


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[dict]) -> Path:
    """Write rows as CSV with the given column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format(row[col]) for col in header) + "\n")
    return path


def write_nmse_csv(result: ExperimentResult, path: str | Path) -> Path:
    return write_csv(path, NMSE_HEADER, result.nmse_rows())


def write_ber_csv(result: ExperimentResult, path: str | Path) -> Path:
    return write_csv(path, BER_HEADER, result.ber_rows())


def write_cfr_magnitude_csv(matrix: np.ndarray, path: str | Path) -> Path:
    """Per-entry magnitude grid of a transform-domain response matrix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mag = np.abs(np.asarray(matrix))
    with path.open("w") as fh:
        fh.write(",".join(f"col_{j}" for j in range(mag.shape[1])) + "\n")
        for row in mag:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


class ManifestError(RuntimeError):
    """Raised when an output directory already holds a run manifest."""


def write_manifest(
    out_dir: str | Path,
    command: str,
    config_snapshot: dict,
    outputs: list[Path],
    elapsed_seconds: float,
    seed: int | None = None,
) -> Path:
    """Record what was run and what it produced; one manifest per output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        raise ManifestError(
            f"output directory {out_dir} already contains a run manifest; "
            "choose a fresh directory"
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config_snapshot,
        "outputs": sorted(p.name for p in outputs),
        "elapsed_seconds": elapsed_seconds,
        "completed_at_unix": time.time(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest_path


def config_snapshot(config) -> dict:
    """JSON-serialisable snapshot of a (dataclass) configuration."""
    return asdict(config)
