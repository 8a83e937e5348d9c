"""End-to-end Monte-Carlo link simulation.

Every trial draws one channel realisation shared by all configured
waveforms and estimators (paired comparison), transmits a training symbol
and a QPSK data symbol through the time-domain channel, estimates the
transform-domain response from the training observation, and equalises the
data observation with both the estimated and the true response.  Noise is
re-drawn per SNR point from a trial-level standard draw so that curves stay
paired across arms.

Randomness is fully reproducible: trial ``t`` uses the child seed sequence
``SeedSequence(seed, spawn_key=(t,))``, so results do not depend on how
trials are distributed over workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cfr import CfrMatrix, compute_total_cfr
from .channel import ChannelConfig, carrier_for_doppler_order, sample_random_channel, unit_path_matrix
from .estimators import (
    DEFAULT_PILOT_SEED,
    AmbiguityError,
    PilotSpec,
    build_index_matrices,
    dictionary_for_grid,
    ece_estimate,
    imi_estimate,
    omp_estimate,
)
from .transforms import WaveformParams, build_daft_matrix, modulate, preset_params, strip_prefix

ESTIMATORS = ("ideal", "ece", "imi", "omp")

_IMI_TABLE_DEPTH = 3
_NO_ESTIMATE = -1  # sentinel for bit-error counts when an estimator yields nothing


def map_symbols(bits: np.ndarray) -> np.ndarray:
    """Gray-coded QPSK with unit average energy; bit pairs map to (I, Q) signs."""
    bits = np.asarray(bits)
    if bits.size % 2 != 0:
        raise ValueError(f"bit count must be even, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    return ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1])) / math.sqrt(2.0)


def demap_symbols(symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance QPSK demapping (per-axis sign decisions)."""
    symbols = np.asarray(symbols)
    bits = np.empty((symbols.size, 2), dtype=np.int64)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.reshape(-1)


def mmse_equalize(z: np.ndarray, cfr: CfrMatrix | np.ndarray, snr: float) -> np.ndarray:
    """Linear MMSE symbol estimate ``(H^H H + I/snr)^-1 H^H z`` via a direct solve."""
    if snr <= 0:
        raise ValueError(f"snr must be positive, got {snr}")
    h = cfr.entries if isinstance(cfr, CfrMatrix) else np.asarray(cfr)
    z = np.asarray(z, dtype=complex)
    if h.shape != (z.size, z.size):
        raise ValueError(f"response shape {h.shape} does not match observation length {z.size}")
    gram = h.conj().T @ h + np.eye(z.size) / snr
    try:
        return np.linalg.solve(gram, h.conj().T @ z)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - requires pathological input
        raise RuntimeError(f"equaliser solve failed: {exc}") from exc


def nmse(estimate: CfrMatrix | np.ndarray, truth: CfrMatrix | np.ndarray) -> float:
    """Squared Frobenius error of the estimate normalised by the truth."""
    est = estimate.entries if isinstance(estimate, CfrMatrix) else np.asarray(estimate)
    ref = truth.entries if isinstance(truth, CfrMatrix) else np.asarray(truth)
    denom = float(np.linalg.norm(ref) ** 2)
    if denom == 0.0:
        raise ValueError("reference response is identically zero")
    return float(np.linalg.norm(est - ref) ** 2) / denom


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte-Carlo experiment description; identical config + seed reproduces runs."""

    waveforms: tuple[str, ...]
    channel: ChannelConfig
    snr_db: tuple[float, ...]
    trials: int
    seed: int
    estimators: tuple[str, ...] = ("omp", "ideal")
    n: int = 128
    n_cpp: int = 20
    f_s: float = 1500.0
    f_c: float = 35000.0
    pilot_count: int = 128
    pilot_placement: str = "contiguous"
    pilot_seed: int = DEFAULT_PILOT_SEED

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"need at least one trial, got {self.trials}")
        if len(self.snr_db) == 0:
            raise ValueError("snr grid must not be empty")
        if len(self.waveforms) == 0:
            raise ValueError("need at least one waveform")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator {est!r}, expected one of {ESTIMATORS}")
        if self.channel.max_delay > self.n_cpp:
            raise ValueError(
                f"prefix length {self.n_cpp} cannot cover max delay {self.channel.max_delay}"
            )

    @property
    def carrier(self) -> float:
        """Carrier frequency, derived from the Doppler-order knob when set."""
        if self.channel.doppler_order is not None and self.channel.max_dfs >= 1:
            return carrier_for_doppler_order(
                self.n, self.f_s, self.channel.max_dfs, self.channel.doppler_order
            )
        return self.f_c

    def params_for(self, waveform: str) -> WaveformParams:
        return preset_params(
            waveform,
            n=self.n,
            n_cpp=self.n_cpp,
            f_s=self.f_s,
            f_c=self.carrier,
            q_max=self.channel.max_dfs,
        )

    def measurement_pilot(self) -> PilotSpec:
        """Multi-tone training layout used by the dictionary estimator."""
        return PilotSpec.pseudo_random(
            self.pilot_count, placement=self.pilot_placement, seed=self.pilot_seed
        )

    def peak_pilot(self) -> PilotSpec:
        """Single-tone training layout used by the peak-based estimators."""
        return PilotSpec.single_first()


@dataclass
class ExperimentResult:
    """Per-trial NMSE and bit-error records for every (waveform, estimator, SNR)."""

    config: ExperimentConfig
    arms: list[tuple[str, str]]
    nmse_trials: dict[tuple[str, str], np.ndarray]
    bit_errors: dict[tuple[str, str], np.ndarray]
    bits_per_trial: int
    ambiguous_trials: dict[tuple[str, str], np.ndarray]
    elapsed_seconds: float = 0.0

    def nmse_mean(self, waveform: str, estimator: str) -> np.ndarray:
        """Mean NMSE per SNR over trials that produced an estimate."""
        values = self.nmse_trials[(waveform, estimator)]
        out = np.full(values.shape[1], np.nan)
        valid = ~np.isnan(values)
        counts = valid.sum(axis=0)
        sums = np.where(valid, values, 0.0).sum(axis=0)
        nonzero = counts > 0
        out[nonzero] = sums[nonzero] / counts[nonzero]
        return out

    def ber(self, waveform: str, estimator: str) -> np.ndarray:
        errors = self.bit_errors[(waveform, estimator)]
        valid = errors >= 0
        counted = valid.sum(axis=0) * self.bits_per_trial
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(
                counted > 0,
                np.where(errors < 0, 0, errors).sum(axis=0) / np.maximum(counted, 1),
                np.nan,
            )

    def nmse_rows(self) -> list[dict]:
        rows = []
        for waveform, estimator in self.arms:
            means = self.nmse_mean(waveform, estimator)
            values = self.nmse_trials[(waveform, estimator)]
            ambiguous = self.ambiguous_trials[(waveform, estimator)]
            for i, snr in enumerate(self.config.snr_db):
                valid = int(np.count_nonzero(~np.isnan(values[:, i])))
                rows.append(
                    {
                        "waveform": waveform,
                        "estimator": estimator,
                        "snr_db": snr,
                        "nmse_mean": float(means[i]),
                        "trials_valid": valid,
                        "trials_ambiguous": int(ambiguous.sum()),
                    }
                )
        return rows

    def ber_rows(self) -> list[dict]:
        rows = []
        for waveform, estimator in self.arms:
            errors = self.bit_errors[(waveform, estimator)]
            for i, snr in enumerate(self.config.snr_db):
                col = errors[:, i]
                valid = col >= 0
                bits_counted = int(valid.sum()) * self.bits_per_trial
                total_errors = int(col[valid].sum()) if valid.any() else 0
                rows.append(
                    {
                        "waveform": waveform,
                        "estimator": estimator,
                        "snr_db": snr,
                        "bit_errors": total_errors,
                        "bits_counted": bits_counted,
                        "ber": total_errors / bits_counted if bits_counted else float("nan"),
                    }
                )
        return rows


@dataclass
class _Arm:
    """Precomputed per-waveform machinery shared by all trials."""

    params: WaveformParams
    daft: np.ndarray
    pilot_single: PilotSpec
    pilot_multi: PilotSpec
    x_single_core: np.ndarray
    x_multi_core: np.ndarray
    dictionary: object | None
    psi: object | None


def _prepare_arms(config: ExperimentConfig) -> dict[str, _Arm]:
    arms = {}
    needs_peak = any(e in ("ece", "imi") for e in config.estimators)
    needs_dict = "omp" in config.estimators
    for waveform in config.waveforms:
        params = config.params_for(waveform)
        pilot_single = config.peak_pilot()
        pilot_multi = config.measurement_pilot()
        x_single = modulate(pilot_single.symbol_vector(params.n), params)
        x_multi = modulate(pilot_multi.symbol_vector(params.n), params)
        dictionary = None
        psi = None
        if needs_dict:
            dictionary = dictionary_for_grid(
                params,
                config.channel.max_delay,
                config.channel.max_dfs,
                pilot_multi,
                mode=config.channel.mode,
            )
        if needs_peak:
            psi = build_index_matrices(
                params,
                config.channel.max_delay,
                config.channel.max_dfs,
                _IMI_TABLE_DEPTH,
                pilot_single,
                mode=config.channel.mode,
            )
        arms[waveform] = _Arm(
            params=params,
            daft=build_daft_matrix(params),
            pilot_single=pilot_single,
            pilot_multi=pilot_multi,
            x_single_core=strip_prefix(x_single, params),
            x_multi_core=strip_prefix(x_multi, params),
            dictionary=dictionary,
            psi=psi,
        )
    return arms


def _run_trial(config: ExperimentConfig, trial: int, arms: dict[str, _Arm]):
    """One Monte-Carlo trial; returns nested {waveform: {estimator: (nmse, errors, ambiguous)}}."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(trial,)))
    first_params = arms[config.waveforms[0]].params
    paths = sample_random_channel(config.channel, first_params, rng)
    n = config.n
    noise_pilot = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    noise_data = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    bits = rng.integers(0, 2, size=2 * n)
    data_symbols = map_symbols(bits)
    snrs = np.asarray(config.snr_db, dtype=float)
    out = {}
    for waveform in config.waveforms:
        arm = arms[waveform]
        params = arm.params
        mode = config.channel.mode
        truth = compute_total_cfr(paths, params, mode)
        # noise-free received cores; noise is added per SNR point below
        y_single = np.zeros(n, dtype=complex)
        y_multi = np.zeros(n, dtype=complex)
        y_data = np.zeros(n, dtype=complex)
        x_data_core = strip_prefix(modulate(data_symbols, params), params)
        for path in paths:
            op = unit_path_matrix(params, path.delay_samples(params), path.doppler, mode)
            y_single += path.gain * (op @ arm.x_single_core)
            y_multi += path.gain * (op @ arm.x_multi_core)
            y_data += path.gain * (op @ x_data_core)
        per_est = {
            est: (np.full(snrs.size, np.nan), np.full(snrs.size, _NO_ESTIMATE, dtype=np.int64), False)
            for est in config.estimators
        }
        for i, snr_db in enumerate(snrs):
            snr = 10.0 ** (snr_db / 10.0)
            sigma = math.sqrt(1.0 / snr)
            z_single = arm.daft @ (y_single + sigma * noise_pilot)
            z_multi = arm.daft @ (y_multi + sigma * noise_pilot)
            z_data = arm.daft @ (y_data + sigma * noise_data)
            for est in config.estimators:
                nmse_vec, err_vec, _ = per_est[est]
                estimate = None
                if est == "ideal":
                    estimate = truth
                elif est == "omp":
                    result = omp_estimate(
                        z_multi, arm.dictionary, params, num_paths=config.channel.num_paths
                    )
                    estimate = result.cfr_estimate
                elif est == "imi":
                    result = imi_estimate(
                        z_single,
                        arm.pilot_single,
                        arm.psi,
                        params,
                        max_paths=config.channel.num_paths,
                        mode=mode,
                    )
                    estimate = result.cfr_estimate
                elif est == "ece":
                    try:
                        result = ece_estimate(
                            z_single,
                            arm.pilot_single,
                            params,
                            config.channel.max_delay,
                            config.channel.max_dfs,
                            num_paths=config.channel.num_paths,
                            mode=mode,
                        )
                        estimate = result.cfr_estimate
                    except AmbiguityError:
                        per_est[est] = (nmse_vec, err_vec, True)
                        continue
                nmse_vec[i] = 0.0 if est == "ideal" else nmse(estimate, truth)
                equalised = mmse_equalize(z_data, estimate, snr)
                err_vec[i] = int(np.count_nonzero(demap_symbols(equalised) != bits))
        out[waveform] = per_est
    return out


_WORKER_ARMS: dict[ExperimentConfig, dict[str, _Arm]] = {}


def _trial_worker(args):
    config, trial = args
    arms = _WORKER_ARMS.get(config)
    if arms is None:
        arms = _prepare_arms(config)
        _WORKER_ARMS.clear()
        _WORKER_ARMS[config] = arms
    return trial, _run_trial(config, trial, arms)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run the configured Monte-Carlo sweep; deterministic for a given config and seed.

    ``workers > 1`` distributes trials over processes; per-trial seeding
    keeps the output identical to the serial run.
    """
    start = time.perf_counter()
    arm_keys = [(w, e) for w in config.waveforms for e in config.estimators]
    shape = (config.trials, len(config.snr_db))
    nmse_trials = {key: np.full(shape, np.nan) for key in arm_keys}
    bit_errors = {key: np.full(shape, _NO_ESTIMATE, dtype=np.int64) for key in arm_keys}
    ambiguous = {key: np.zeros(config.trials, dtype=bool) for key in arm_keys}

    def _store(trial: int, outcome) -> None:
        for waveform, per_est in outcome.items():
            for est, (nmse_vec, err_vec, amb) in per_est.items():
                nmse_trials[(waveform, est)][trial] = nmse_vec
                bit_errors[(waveform, est)][trial] = err_vec
                ambiguous[(waveform, est)][trial] = amb

    if workers <= 1:
        arms = _prepare_arms(config)
        for trial in range(config.trials):
            _store(trial, _run_trial(config, trial, arms))
    else:
        jobs = [(config, trial) for trial in range(config.trials)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, config.trials // (workers * 4))
            for trial, outcome in pool.map(_trial_worker, jobs, chunksize=chunk):
                _store(trial, outcome)
    return ExperimentResult(
        config=config,
        arms=arm_keys,
        nmse_trials=nmse_trials,
        bit_errors=bit_errors,
        bits_per_trial=2 * config.n,
        ambiguous_trials=ambiguous,
        elapsed_seconds=time.perf_counter() - start,
    )
