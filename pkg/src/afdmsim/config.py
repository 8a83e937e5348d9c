"""Experiment configuration files: JSON schema, validation and loading.

The schema is a flat JSON object with ``channel``, ``pilot`` and optional
``metrics`` sections; unknown keys anywhere are rejected so typos fail fast
instead of silently running a different experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .channel import ChannelConfig
from .estimators import DEFAULT_PILOT_SEED
from .linksim import ESTIMATORS, ExperimentConfig
from .transforms import WAVEFORM_KINDS


class ConfigError(ValueError):
    """Malformed experiment configuration."""


_TOP_KEYS = {
    "waveforms", "waveform", "n", "n_cpp", "f_s", "f_c",
    "channel", "pilot", "estimators", "snr_db", "trials", "seed", "metrics",
}
_CHANNEL_KEYS = {
    "paths", "l_max", "q_max", "doppler_order", "decay_alpha", "mode",
    "distinct_delays",
}
_PILOT_KEYS = {"n_p", "placement", "seed"}
_METRICS_KEYS = {
    "draws", "inv_noise", "error_samples", "error_weight", "epsilon",
    "cop_trials", "pilot_counts",
}

_REQUIRED_TOP = ("snr_db", "trials", "seed")


@dataclass(frozen=True)
class MetricsOptions:
    """Knobs for the analysis subcommands (overlap, coherence, diversity)."""

    draws: int = 500
    inv_noise: float = 50.0
    error_samples: int = 4
    error_weight: int = 1
    epsilon: float = 0.1
    cop_trials: int = 100_000
    pilot_counts: tuple[int, ...] = (64, 128)


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        names = ", ".join(sorted(repr(k) for k in unknown))
        raise ConfigError(f"unknown key(s) {names} in {where}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return section[key]


def parse_config(raw: dict) -> tuple[ExperimentConfig, MetricsOptions]:
    """Validate a parsed JSON object and build the experiment configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "the top level")
    for key in _REQUIRED_TOP:
        _require(raw, key, "the top level")
    if "waveforms" in raw and "waveform" in raw:
        raise ConfigError("give either 'waveform' or 'waveforms', not both")
    if "waveforms" in raw:
        waveforms = tuple(raw["waveforms"])
    elif "waveform" in raw:
        waveforms = (raw["waveform"],)
    else:
        raise ConfigError("missing required key 'waveforms' in the top level")
    for w in waveforms:
        if w not in WAVEFORM_KINDS:
            raise ConfigError(f"unknown waveform {w!r}, expected one of {WAVEFORM_KINDS}")

    channel_raw = _require(raw, "channel", "the top level")
    _check_keys(channel_raw, _CHANNEL_KEYS, "section 'channel'")
    try:
        channel = ChannelConfig(
            num_paths=_require(channel_raw, "paths", "section 'channel'"),
            max_delay=_require(channel_raw, "l_max", "section 'channel'"),
            max_dfs=_require(channel_raw, "q_max", "section 'channel'"),
            doppler_order=channel_raw.get("doppler_order"),
            decay_alpha=channel_raw.get("decay_alpha"),
            mode=channel_raw.get("mode", "msml"),
            distinct_delays=channel_raw.get("distinct_delays", True),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid channel section: {exc}") from exc

    pilot_raw = raw.get("pilot", {})
    _check_keys(pilot_raw, _PILOT_KEYS, "section 'pilot'")

    estimators = tuple(raw.get("estimators", ("omp", "ideal")))
    for est in estimators:
        if est not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {est!r}, expected one of {ESTIMATORS}")

    snr_db = raw["snr_db"]
    if not isinstance(snr_db, list) or not snr_db:
        raise ConfigError("'snr_db' must be a non-empty list of dB values")

    metrics_raw = raw.get("metrics", {})
    _check_keys(metrics_raw, _METRICS_KEYS, "section 'metrics'")
    metrics = MetricsOptions(
        draws=metrics_raw.get("draws", 500),
        inv_noise=metrics_raw.get("inv_noise", 50.0),
        error_samples=metrics_raw.get("error_samples", 4),
        error_weight=metrics_raw.get("error_weight", 1),
        epsilon=metrics_raw.get("epsilon", 0.1),
        cop_trials=metrics_raw.get("cop_trials", 100_000),
        pilot_counts=tuple(metrics_raw.get("pilot_counts", (64, 128))),
    )

    try:
        experiment = ExperimentConfig(
            waveforms=waveforms,
            channel=channel,
            snr_db=tuple(float(v) for v in snr_db),
            trials=int(raw["trials"]),
            seed=int(raw["seed"]),
            estimators=estimators,
            n=int(raw.get("n", 128)),
            n_cpp=int(raw.get("n_cpp", 20)),
            f_s=float(raw.get("f_s", 1500.0)),
            f_c=float(raw.get("f_c", 35000.0)),
            pilot_count=int(pilot_raw.get("n_p", 128)),
            pilot_placement=pilot_raw.get("placement", "contiguous"),
            pilot_seed=int(pilot_raw.get("seed", DEFAULT_PILOT_SEED)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return experiment, metrics


def load_config(path: str | Path) -> tuple[ExperimentConfig, MetricsOptions]:
    """Read and validate a JSON experiment configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return parse_config(raw)
