"""Multi-scale multi-lag channel model.

Each propagation path carries a complex gain, a delay and a Doppler factor
``a``.  The Doppler factor acts twice: it time-scales the waveform by
``(1 + a)`` (significant at acoustic carrier frequencies) and it shifts the
carrier by ``a * f_c``.  A path with Doppler factor zero and integer delay
reduces to a cyclic shift of the core block, which is the familiar radio
(``dfs-only``) approximation.

Per-path operators are dense ``n x n`` matrices built from the sampled
interpolation kernel; with prefix folding they act directly on the core
block of a prefixed symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .transforms import WaveformParams

CHANNEL_MODES = ("msml", "dfs-only")

_GUARD_TOL = 1e-9


@dataclass(frozen=True)
class Path:
    """One propagation path: complex gain, Doppler factor ``a`` and delay in seconds."""

    gain: complex
    doppler: float
    delay: float

    def delay_samples(self, params: WaveformParams) -> float:
        """Delay normalised to the sampling interval (``l`` in samples)."""
        return self.delay * params.f_s

    def dfs_bins(self, params: WaveformParams) -> float:
        """Doppler frequency shift normalised to the subcarrier spacing (``Q``)."""
        return params.n * self.doppler * params.f_c / params.f_s


PathSet = Sequence[Path]


def doppler_from_dfs(q: int | float, params: WaveformParams) -> float:
    """Doppler factor that puts the carrier shift exactly on grid index ``q``."""
    return q * params.f_s / (params.n * params.f_c)


def path_from_grid(l: int, q: int, gain: complex, params: WaveformParams) -> Path:
    """Construct an on-grid path from integer delay/DFS indices."""
    return Path(gain=complex(gain), doppler=doppler_from_dfs(q, params), delay=l / params.f_s)


def carrier_for_doppler_order(n: int, f_s: float, q_max: int, doppler_order: float) -> float:
    """Carrier frequency for which the largest on-grid Doppler factor is ``doppler_order``.

    Keeps the integer DFS grid intact while scaling the physical Doppler
    factors to the requested magnitude.
    """
    if q_max < 1:
        raise ValueError("carrier scaling needs q_max >= 1")
    if doppler_order <= 0:
        raise ValueError(f"doppler_order must be positive, got {doppler_order}")
    return q_max * f_s / (n * doppler_order)


@dataclass(frozen=True)
class ChannelConfig:
    """Random-channel generator settings.

    ``max_delay`` (``l_max``) and ``max_dfs`` (``q_max``) bound the integer
    delay/DFS grid.  ``doppler_order`` optionally pins the magnitude of the
    largest Doppler factor (the experiment layer derives the carrier
    frequency from it).  Path powers decay exponentially with delay at rate
    ``decay_alpha`` (nepers per delay sample) and normalise to unit total.
    """

    num_paths: int
    max_delay: int
    max_dfs: int
    doppler_order: float | None = None
    decay_alpha: float | None = None
    mode: str = "msml"
    distinct_delays: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError(f"need at least one path, got {self.num_paths}")
        if self.max_delay < 0 or self.max_dfs < 0:
            raise ValueError("delay/DFS bounds must be nonnegative")
        if self.mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}, expected one of {CHANNEL_MODES}")
        if self.doppler_order is not None and self.doppler_order <= 0:
            raise ValueError("doppler_order must be positive when given")

    @property
    def effective_decay_alpha(self) -> float:
        if self.decay_alpha is not None:
            return self.decay_alpha
        if self.max_delay == 0:
            return 0.0
        # 10 dB power drop across the full delay spread by default
        return math.log(10.0) / self.max_delay


def build_path_matrix(path: Path, params: WaveformParams, mode: str = "msml") -> np.ndarray:
    """Dense unit-gain time-domain operator for one path, prefix folding included.

    Entry ``(m, k)`` is the sampled interpolation kernel
    ``Sa(pi * ((1+a)m - l - k))`` (``m - l - k`` in ``dfs-only`` mode) times
    the Doppler rotation ``exp(-j*2*pi*D*m)``; columns inside the prefix
    window additionally pick up the wrapped kernel term.
    """
    if mode not in CHANNEL_MODES:
        raise ValueError(f"unknown channel mode {mode!r}, expected one of {CHANNEL_MODES}")
    n, n_cpp = params.n, params.n_cpp
    l = path.delay_samples(params)
    if l < -_GUARD_TOL or l > n_cpp + _GUARD_TOL:
        raise ValueError(
            f"path delay {l:.6g} samples falls outside the prefix guard [0, {n_cpp}]"
        )
    m = np.arange(n, dtype=float)[:, None]
    k = np.arange(n, dtype=float)[None, :]
    scale = (1.0 + path.doppler) if mode == "msml" else 1.0
    kernel_arg = scale * m - l - k
    kernel = np.sinc(kernel_arg)
    if n_cpp > 0:
        kernel[:, n - n_cpp:] += np.sinc(kernel_arg[:, n - n_cpp:] + n)
    dfs = path.doppler * params.f_c / params.f_s
    # Rotation sign chosen so an on-grid path concentrates at transform-domain
    # offset (q + 2*n*c1*l) mod n; see cfr.loc_index.
    return kernel * np.exp(-2j * np.pi * dfs * m)


@lru_cache(maxsize=1024)
def _unit_path_matrix_cached(
    params: WaveformParams, delay_samples: float, doppler: float, mode: str
) -> np.ndarray:
    path = Path(gain=1.0 + 0j, doppler=doppler, delay=delay_samples / params.f_s)
    out = build_path_matrix(path, params, mode)
    out.flags.writeable = False
    return out


def unit_path_matrix(
    params: WaveformParams, delay_samples: float, doppler: float, mode: str = "msml"
) -> np.ndarray:
    """Cached unit-gain path operator keyed by normalised delay and Doppler factor.

    Returns a read-only array shared between callers.
    """
    return _unit_path_matrix_cached(params, float(delay_samples), float(doppler), mode)


def apply_channel(
    samples_with_prefix: np.ndarray,
    paths: PathSet,
    params: WaveformParams,
    noise_var: float,
    rng: np.random.Generator,
    mode: str = "msml",
) -> np.ndarray:
    """Propagate a prefixed time-domain symbol and add white Gaussian noise.

    Returns the length-``n`` received core block
    ``sum_i gain_i * H_i @ core + w`` where ``w`` has i.i.d. circular complex
    Gaussian entries of total variance ``noise_var`` (exact zero noise when
    ``noise_var == 0``).
    """
    if len(paths) == 0:
        raise ValueError("path set must not be empty")
    if noise_var < 0:
        raise ValueError(f"noise variance must be nonnegative, got {noise_var}")
    samples_with_prefix = np.asarray(samples_with_prefix, dtype=complex)
    expected = params.n + params.n_cpp
    if samples_with_prefix.shape != (expected,):
        raise ValueError(
            f"expected {expected} samples (core plus prefix), got shape {samples_with_prefix.shape}"
        )
    core = samples_with_prefix[params.n_cpp:]
    received = np.zeros(params.n, dtype=complex)
    for path in paths:
        op = unit_path_matrix(params, path.delay_samples(params), path.doppler, mode)
        received += path.gain * (op @ core)
    if noise_var > 0:
        sigma = math.sqrt(noise_var / 2.0)
        received = received + sigma * (
            rng.standard_normal(params.n) + 1j * rng.standard_normal(params.n)
        )
    return received


def sample_random_channel(
    config: ChannelConfig, params: WaveformParams, rng: np.random.Generator
) -> tuple[Path, ...]:
    """Draw a random on-grid channel realisation.

    Integer delays are uniform on ``[0, max_delay]`` (without replacement by
    default), integer DFS indices are uniform on ``[-max_dfs, max_dfs]`` and
    Doppler factors follow from the DFS grid.  Gains are circular complex
    Gaussian with an exponential power profile normalised to unit total.
    """
    p = config.num_paths
    if config.distinct_delays:
        if p > config.max_delay + 1:
            raise ValueError(
                f"cannot draw {p} distinct delays from [0, {config.max_delay}]"
            )
        delays = rng.choice(config.max_delay + 1, size=p, replace=False)
    else:
        delays = rng.integers(0, config.max_delay + 1, size=p)
    dfs = rng.integers(-config.max_dfs, config.max_dfs + 1, size=p)
    profile = np.exp(-config.effective_decay_alpha * delays.astype(float))
    profile /= profile.sum()
    gains = np.sqrt(profile / 2.0) * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    return tuple(
        path_from_grid(int(l), int(q), g, params)
        for l, q, g in zip(delays, dfs, gains)
    )
