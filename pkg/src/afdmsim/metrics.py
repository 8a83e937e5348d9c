"""Diversity, pairwise-error-probability and dictionary-coherence metrics.

The error measurement matrix collects the Gram matrix of the per-path
received copies of a symbol error vector; its significant eigenvalues count
the diversity branches a waveform extracts from the channel, and they bound
the pairwise error probability.  Dictionary coherence (the largest
normalised column correlation) predicts how well sparse recovery can tell
candidate paths apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cfr import CfrMatrix, unit_path_cfr
from .channel import ChannelConfig, sample_random_channel
from .transforms import WaveformParams

_RANK_REL_TOL = 1e-12

# QPSK constellation with unit average energy, Gray-mapped quadrants
QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def _entries(cfr: CfrMatrix | np.ndarray) -> np.ndarray:
    return cfr.entries if isinstance(cfr, CfrMatrix) else np.asarray(cfr)


@dataclass
class ErrorMeasure:
    """Gram matrix of per-path error copies with its eigen-spectrum."""

    r_matrix: np.ndarray
    eigenvalues: np.ndarray
    effective_rank: int
    pep_bound: float | None = None


def signal_copy_matrix(
    symbols: np.ndarray, per_path_cfrs: list[CfrMatrix] | list[np.ndarray]
) -> np.ndarray:
    """Stack the per-path received copies of one symbol vector as columns."""
    if len(per_path_cfrs) == 0:
        raise ValueError("need at least one path response")
    symbols = np.asarray(symbols, dtype=complex)
    columns = []
    for cfr in per_path_cfrs:
        mat = _entries(cfr)
        if mat.shape != (symbols.size, symbols.size):
            raise ValueError(
                f"path response shape {mat.shape} does not match symbol length {symbols.size}"
            )
        columns.append(mat @ symbols)
    return np.stack(columns, axis=1)


def error_measure(
    delta: np.ndarray,
    per_path_cfrs: list[CfrMatrix] | list[np.ndarray],
    epsilon: float = 0.1,
    relative: bool = False,
) -> ErrorMeasure:
    """Gram matrix of the error copies and its thresholded eigen-spectrum.

    Eigenvalues are sorted descending and clipped at zero; the effective
    rank counts those at or above ``epsilon`` (relative to the largest
    eigenvalue when ``relative`` is set, absolute otherwise).
    """
    delta = np.asarray(delta, dtype=complex)
    if not np.any(delta):
        raise ValueError("error vector must be nonzero")
    copies = signal_copy_matrix(delta, per_path_cfrs)
    gram = copies.conj().T @ copies
    eigvals = np.linalg.eigvalsh(gram)[::-1]
    eigvals = np.clip(eigvals.real, 0.0, None)
    threshold = epsilon * eigvals[0] if relative and eigvals[0] > 0 else epsilon
    effective = int(np.count_nonzero(eigvals >= threshold))
    return ErrorMeasure(r_matrix=gram, eigenvalues=eigvals, effective_rank=effective)


def pep_upper_bound(
    measure: ErrorMeasure, n0: float, num_paths: int, counted: str = "rank"
) -> float:
    """Union-bound factor ``prod 1 / (1 + eig / (4 * P * n0))`` over counted eigenvalues.

    ``counted="rank"`` multiplies over the numerically nonzero eigenvalues
    (zero eigenvalues contribute unit factors either way);
    ``counted="effective"`` keeps only the thresholded ones.
    """
    if n0 <= 0:
        raise ValueError(f"noise level must be positive, got {n0}")
    if counted not in ("rank", "effective"):
        raise ValueError(f"counted must be 'rank' or 'effective', got {counted!r}")
    eigvals = measure.eigenvalues
    if counted == "effective":
        eigvals = eigvals[: measure.effective_rank]
    elif eigvals.size and eigvals[0] > 0:
        eigvals = eigvals[eigvals > _RANK_REL_TOL * eigvals[0]]
    else:
        eigvals = eigvals[:0]
    return float(np.prod(1.0 / (1.0 + eigvals / (4.0 * num_paths * n0))))


def mip(dictionary) -> float:
    """Largest normalised correlation between two different dictionary columns.

    Accepts either a dictionary object with an ``atoms`` attribute or a raw
    ``n x k`` array of columns.
    """
    atoms = getattr(dictionary, "atoms", dictionary)
    atoms = np.asarray(atoms, dtype=complex)
    if atoms.ndim != 2 or atoms.shape[1] < 2:
        raise ValueError("dictionary must provide at least two columns")
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        raise ValueError("dictionary contains a zero column")
    normalised = atoms / norms[None, :]
    gram = np.abs(normalised.conj().T @ normalised)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def sample_error_vector(
    n: int, rng: np.random.Generator, weight: int = 1
) -> np.ndarray:
    """Difference of two random QPSK symbol vectors that disagree in ``weight`` entries.

    Low-weight differences are the error events that expose rank loss, so
    the diversity sweep samples them directly.
    """
    if not 1 <= weight <= n:
        raise ValueError(f"weight must lie in [1, {n}], got {weight}")
    delta = np.zeros(n, dtype=complex)
    positions = rng.choice(n, size=weight, replace=False)
    for pos in positions:
        a, b = rng.choice(4, size=2, replace=False)
        delta[pos] = QPSK_POINTS[a] - QPSK_POINTS[b]
    return delta


@dataclass
class DiversityResult:
    """Per-draw diversity statistics for one waveform."""

    waveform: str
    effective_ranks: np.ndarray
    pep_bounds: np.ndarray

    @property
    def mean_effective_rank(self) -> float:
        return float(self.effective_ranks.mean())

    @property
    def median_pep(self) -> float:
        return float(np.median(self.pep_bounds))

    def rank_histogram(self, max_rank: int) -> np.ndarray:
        return np.bincount(self.effective_ranks.astype(int), minlength=max_rank + 1)


def diversity_study(
    presets: dict[str, WaveformParams],
    config: ChannelConfig,
    draws: int,
    inv_noise: float,
    rng: np.random.Generator,
    error_samples: int = 4,
    error_weight: int = 1,
    epsilon: float = 0.1,
) -> dict[str, DiversityResult]:
    """Monte-Carlo sweep of effective rank and PEP bound across waveform presets.

    Every draw shares one channel realisation and one set of error vectors
    across all presets (paired comparison).  Per draw, the effective rank is
    the minimum and the PEP bound the maximum over the sampled error
    vectors, approximating the worst-case error event.
    """
    if draws < 1:
        raise ValueError(f"need at least one draw, got {draws}")
    if inv_noise <= 0:
        raise ValueError(f"inverse noise level must be positive, got {inv_noise}")
    names = list(presets)
    any_params = presets[names[0]]
    n = any_params.n
    n0 = 1.0 / inv_noise
    ranks = {name: np.zeros(draws, dtype=int) for name in names}
    peps = {name: np.zeros(draws) for name in names}
    for draw in range(draws):
        paths = sample_random_channel(config, any_params, rng)
        deltas = [sample_error_vector(n, rng, error_weight) for _ in range(error_samples)]
        for name in names:
            params = presets[name]
            cfrs = [
                unit_path_cfr(params, p.delay_samples(params), p.doppler, config.mode)
                for p in paths
            ]
            worst_rank = config.num_paths
            worst_pep = 0.0
            for delta in deltas:
                measure = error_measure(delta, cfrs, epsilon=epsilon)
                worst_rank = min(worst_rank, measure.effective_rank)
                worst_pep = max(
                    worst_pep, pep_upper_bound(measure, n0, config.num_paths)
                )
            ranks[name][draw] = worst_rank
            peps[name][draw] = worst_pep
    return {
        name: DiversityResult(name, ranks[name], peps[name]) for name in names
    }
