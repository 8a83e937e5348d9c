"""Transform-domain channel frequency response matrices, path positions and overlap probability.

Conjugating a time-domain path operator by the DAFT matrix gives the
transform-domain response seen by the symbol vector.  Paths with negligible
time scaling concentrate on a single cyclic diagonal whose offset
(the *loc index*) encodes the delay/DFS pair; time scaling spreads the
energy off that diagonal.  The overlap probability of two random paths'
loc indices is the separability figure of merit that distinguishes the
waveform presets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelConfig, PathSet, unit_path_matrix
from .transforms import WaveformParams, build_daft_matrix

PER_PATH_UNIT_GAIN = "per-path-unit-gain"
TOTAL = "total"

_INT_TOL = 1e-9


@dataclass
class CfrMatrix:
    """Dense transform-domain response with a provenance tag."""

    entries: np.ndarray
    provenance: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def compute_path_cfr(time_operator: np.ndarray, params: WaveformParams) -> CfrMatrix:
    """Conjugate a time-domain path operator into the transform domain."""
    time_operator = np.asarray(time_operator, dtype=complex)
    if time_operator.shape != (params.n, params.n):
        raise ValueError(
            f"expected a {params.n}x{params.n} operator, got shape {time_operator.shape}"
        )
    daft = build_daft_matrix(params)
    return CfrMatrix(daft @ time_operator @ daft.conj().T, PER_PATH_UNIT_GAIN)


@lru_cache(maxsize=1024)
def _unit_cfr_cached(
    params: WaveformParams, delay_samples: float, doppler: float, mode: str
) -> np.ndarray:
    op = unit_path_matrix(params, delay_samples, doppler, mode)
    out = compute_path_cfr(op, params).entries
    out.flags.writeable = False
    return out


def unit_path_cfr(
    params: WaveformParams, delay_samples: float, doppler: float, mode: str = "msml"
) -> np.ndarray:
    """Cached unit-gain transform-domain response keyed by delay and Doppler factor.

    Returns a read-only array shared between callers.
    """
    return _unit_cfr_cached(params, float(delay_samples), float(doppler), mode)


def compute_total_cfr(paths: PathSet, params: WaveformParams, mode: str = "msml") -> CfrMatrix:
    """Gain-weighted sum of per-path transform-domain responses."""
    if len(paths) == 0:
        raise ValueError("path set must not be empty")
    total = np.zeros((params.n, params.n), dtype=complex)
    for path in paths:
        total += path.gain * unit_path_cfr(
            params, path.delay_samples(params), path.doppler, mode
        )
    return CfrMatrix(total, TOTAL)


def loc_index(l: int, q: int, params: WaveformParams) -> int:
    """Transform-domain position ``(q + 2*n*c1*l) mod n`` of an on-grid path."""
    rate_l = 2.0 * params.n * params.c1 * l
    if abs(rate_l - round(rate_l)) > _INT_TOL:
        raise ValueError(f"2*n*c1*l must be an integer, got {rate_l}")
    return int((q + round(rate_l)) % params.n)


def _grid_locs(max_delay: int, max_dfs: int, params: WaveformParams) -> np.ndarray:
    ls = np.arange(max_delay + 1)
    qs = np.arange(-max_dfs, max_dfs + 1)
    return (qs[None, :] + params.chirp_rate_int * ls[:, None]) % params.n


def cop_enumerate(max_delay: int, max_dfs: int, params: WaveformParams) -> float:
    """Exact overlap probability for two distinct cells drawn uniformly from the grid.

    Counts ordered pairs of distinct ``(l, q)`` cells whose loc indices
    coincide, over all ordered pairs of distinct cells.
    """
    locs = _grid_locs(max_delay, max_dfs, params).ravel()
    k = locs.size
    if k < 2:
        raise ValueError("grid must contain at least two cells")
    counts = np.bincount(locs, minlength=params.n)
    collisions = np.sum(counts.astype(np.int64) ** 2) - k
    return float(collisions) / (k * (k - 1))


def cop_estimate(
    config: ChannelConfig,
    params: WaveformParams,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo overlap probability over the configured delay/DFS grid.

    Draws pairs of distinct cells uniformly (matching :func:`cop_enumerate`)
    and reports the fraction whose loc indices collide.
    """
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    locs = _grid_locs(config.max_delay, config.max_dfs, params).ravel()
    k = locs.size
    if k < 2:
        raise ValueError("grid must contain at least two cells")
    hits = 0
    remaining = trials
    while remaining > 0:
        first = rng.integers(0, k, size=remaining)
        second = rng.integers(0, k, size=remaining)
        ok = first != second
        hits += int(np.count_nonzero(locs[first[ok]] == locs[second[ok]]))
        remaining -= int(np.count_nonzero(ok))
    return hits / trials


def off_loc_mass(cfr: np.ndarray | CfrMatrix, loc: int) -> float:
    """Fraction of squared magnitude lying off the cyclic diagonal at offset ``loc``."""
    entries = cfr.entries if isinstance(cfr, CfrMatrix) else np.asarray(cfr)
    n = entries.shape[0]
    rows = np.arange(n)
    on_diag = entries[rows, (rows + loc) % n]
    total = float(np.sum(np.abs(entries) ** 2))
    if total == 0.0:
        raise ValueError("response matrix is identically zero")
    return 1.0 - float(np.sum(np.abs(on_diag) ** 2)) / total
