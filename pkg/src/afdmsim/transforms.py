"""Discrete affine Fourier transform (DAFT) matrices and chirp-carrier (de)modulation.

The DAFT is a DFT sandwiched between two quadratic-phase (chirp) diagonals
with parameters ``c1`` and ``c2``.  Setting ``c1 = c2 = 0`` recovers plain
OFDM, ``c1 = 1/(2N)`` recovers OCDM, and ``c1 = (2*q_max + 1)/(2N)`` gives
the AFDM tuning that separates multipath components in the transform domain.

All transforms use the unitary DFT normalisation (1/sqrt(N) both ways), so
modulation and demodulation preserve Euclidean norm and noise covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

_INT_TOL = 1e-9

WAVEFORM_KINDS = ("ofdm", "ocdm", "afdm")


@dataclass(frozen=True)
class WaveformParams:
    """Chirp-multicarrier waveform configuration.

    :param n: subcarrier count (positive even integer)
    :param c1: first chirp parameter; ``2*n*c1`` must be an integer so the
        chirp-periodic prefix reduces to a plain cyclic prefix
    :param c2: second chirp parameter (free real number)
    :param n_cpp: prefix length in samples; must cover the channel's maximum
        delay spread in samples
    :param f_s: bandwidth / sampling rate in Hz
    :param f_c: carrier frequency in Hz
    """

    n: int
    c1: float
    c2: float = 0.0
    n_cpp: int = 0
    f_s: float = 1500.0
    f_c: float = 35000.0

    def __post_init__(self):
        if self.n < 2 or self.n % 2 != 0:
            raise ValueError(f"subcarrier count must be even and >= 2, got {self.n}")
        if self.c1 < 0:
            raise ValueError(f"c1 must be nonnegative, got {self.c1}")
        two_nc1 = 2.0 * self.n * self.c1
        if abs(two_nc1 - round(two_nc1)) > _INT_TOL:
            raise ValueError(
                f"2*n*c1 must be an integer for a cyclic prefix, got {two_nc1}"
            )
        if not 0 <= self.n_cpp <= self.n:
            raise ValueError(f"n_cpp must lie in [0, n], got {self.n_cpp}")
        if self.f_s <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.f_s}")
        if self.f_c <= 0:
            raise ValueError(f"carrier frequency must be positive, got {self.f_c}")

    @property
    def chirp_rate_int(self) -> int:
        """The integer ``2*n*c1`` that controls transform-domain path spacing."""
        return round(2.0 * self.n * self.c1)

    def with_carrier(self, f_c: float) -> "WaveformParams":
        return replace(self, f_c=f_c)


def chirp_diagonal(c: float, n: int) -> np.ndarray:
    """Diagonal of the quadratic-phase matrix: entry k is exp(-j*2*pi*c*k^2)."""
    if n < 1:
        raise ValueError(f"length must be >= 1, got {n}")
    k = np.arange(n, dtype=float)
    return np.exp(-2j * np.pi * c * k * k)


@lru_cache(maxsize=64)
def _daft_matrix_cached(n: int, c1: float, c2: float) -> np.ndarray:
    k = np.arange(n, dtype=float)
    dft = np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    out = (chirp_diagonal(c2, n)[:, None] * dft) * chirp_diagonal(c1, n)[None, :]
    out.flags.writeable = False
    return out


def build_daft_matrix(params: WaveformParams) -> np.ndarray:
    """Forward DAFT matrix ``A = diag(c2) @ F @ diag(c1)`` with unitary F.

    The returned array is cached and marked read-only; copy before mutating.
    """
    return _daft_matrix_cached(params.n, params.c1, params.c2)


def modulate(symbols: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Map a transform-domain symbol vector to time domain and prepend the prefix.

    Returns a length ``n + n_cpp`` vector whose leading ``n_cpp`` samples
    replicate the tail of the core block (cyclic prefix; exact because
    ``2*n*c1`` is an integer and ``n`` is even).
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (params.n,):
        raise ValueError(f"expected symbol vector of length {params.n}, got shape {symbols.shape}")
    core = build_daft_matrix(params).conj().T @ symbols
    if params.n_cpp == 0:
        return core
    return np.concatenate([core[-params.n_cpp:], core])


def strip_prefix(samples: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Drop the prefix from a length ``n + n_cpp`` time-domain vector."""
    samples = np.asarray(samples)
    if samples.shape != (params.n + params.n_cpp,):
        raise ValueError(
            f"expected {params.n + params.n_cpp} samples, got shape {samples.shape}"
        )
    return samples[params.n_cpp:]


def demodulate(samples: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Apply the forward DAFT to a prefix-stripped time-domain vector."""
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (params.n,):
        raise ValueError(f"expected time-domain vector of length {params.n}, got shape {samples.shape}")
    return build_daft_matrix(params) @ samples


def preset_params(
    kind: str,
    n: int,
    n_cpp: int = 0,
    f_s: float = 1500.0,
    f_c: float = 35000.0,
    q_max: int = 0,
    c2: float = 0.0,
) -> WaveformParams:
    """Build waveform parameters for one of the standard presets.

    ``ofdm`` sets ``c1 = 0``, ``ocdm`` sets ``c1 = 1/(2n)`` and ``afdm`` sets
    ``c1 = (2*q_max + 1)/(2n)`` so that paths whose normalised delay/Doppler
    differ occupy distinct transform-domain positions.
    """
    if kind not in WAVEFORM_KINDS:
        raise ValueError(f"unknown waveform kind {kind!r}, expected one of {WAVEFORM_KINDS}")
    if kind == "afdm":
        if q_max < 0:
            raise ValueError(f"q_max must be nonnegative, got {q_max}")
        c1 = (2 * q_max + 1) / (2 * n)
    elif kind == "ocdm":
        c1 = 1.0 / (2 * n)
    else:
        c1 = 0.0
    return WaveformParams(n=n, c1=c1, c2=c2, n_cpp=n_cpp, f_s=f_s, f_c=f_c)
