"""Tests for transform-domain response matrices, path positions and overlap probability."""

import numpy as np
import pytest

from afdmsim import (
    ChannelConfig,
    WaveformParams,
    build_daft_matrix,
    build_path_matrix,
    compute_path_cfr,
    compute_total_cfr,
    cop_enumerate,
    cop_estimate,
    loc_index,
    off_loc_mass,
    path_from_grid,
    preset_params,
    unit_path_cfr,
)
from afdmsim.channel import carrier_for_doppler_order, doppler_from_dfs


def _afdm(n=16, n_cpp=4, q_max=1, f_c=35000.0):
    return preset_params("afdm", n=n, n_cpp=n_cpp, q_max=q_max, f_c=f_c)


def _quad_sum_oracle(h_time, params):
    """Direct quadruple-sum conjugation, expanded entry by entry."""
    n, c1, c2 = params.n, params.c1, params.c2
    out = np.zeros((n, n), dtype=complex)
    for m in range(n):
        for col in range(n):
            eta = np.exp(2j * np.pi * c2 * (col**2 - m**2))
            acc = 0.0 + 0.0j
            for q in range(n):
                inner = 0.0 + 0.0j
                for k in range(n):
                    inner += np.exp(2j * np.pi * (k * col / n + c1 * k**2)) * h_time[q, k]
                acc += np.exp(-2j * np.pi * (m * q / n + c1 * q**2)) * inner
            out[m, col] = eta * acc / n
    return out


class TestPathCfr:
    def test_identity_operator(self):
        params = _afdm()
        cfr = compute_path_cfr(np.eye(params.n), params)
        assert np.abs(cfr.entries - np.eye(params.n)).max() <= 1e-10
        assert cfr.provenance == "per-path-unit-gain"

    def test_dfs_only_pseudo_cyclic_structure(self):
        params = _afdm(n=16)
        path = path_from_grid(2, 1, 1.0, params)
        h = build_path_matrix(path, params, "dfs-only")
        cfr = compute_path_cfr(h, params)
        loc = loc_index(2, 1, params)
        rows = np.arange(16)
        mask = np.zeros((16, 16), dtype=bool)
        mask[rows, (rows + loc) % 16] = True
        assert np.abs(cfr.entries[~mask]).max() <= 1e-9
        assert np.abs(cfr.entries[mask]).min() > 0.9

    def test_matches_quadruple_sum_oracle(self):
        rng = np.random.default_rng(0)
        params = WaveformParams(n=8, c1=1.0 / 16.0, c2=0.3, n_cpp=2)
        h = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        cfr = compute_path_cfr(h, params)
        oracle = _quad_sum_oracle(h, params)
        assert np.abs(cfr.entries - oracle).max() <= 1e-9

    def test_frobenius_norm_preserved(self):
        rng = np.random.default_rng(1)
        params = _afdm(n=32, n_cpp=8)
        h = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
        cfr = compute_path_cfr(h, params)
        rel = abs(np.linalg.norm(cfr.entries) - np.linalg.norm(h)) / np.linalg.norm(h)
        assert rel <= 1e-9

    def test_rejects_wrong_shape(self):
        params = _afdm()
        with pytest.raises(ValueError):
            compute_path_cfr(np.eye(params.n - 1), params)


class TestTotalCfr:
    def test_linearity_against_per_path_sum(self):
        params = _afdm(n=16)
        p1 = path_from_grid(1, 0, 0.5 + 0.1j, params)
        p2 = path_from_grid(3, -1, -0.2j, params)
        total = compute_total_cfr([p1, p2], params, "msml")
        parts = (
            p1.gain * unit_path_cfr(params, 1.0, p1.doppler, "msml")
            + p2.gain * unit_path_cfr(params, 3.0, p2.doppler, "msml")
        )
        assert np.abs(total.entries - parts).max() <= 1e-12
        assert total.provenance == "total"

    def test_single_path_scaling(self):
        params = _afdm(n=16)
        gain = 0.3 - 0.8j
        path = path_from_grid(2, 1, gain, params)
        total = compute_total_cfr([path], params, "msml")
        unit = unit_path_cfr(params, 2.0, path.doppler, "msml")
        assert np.abs(total.entries - gain * unit).max() <= 1e-12

    def test_matches_summed_time_domain_conjugation(self):
        """Summing operators first and conjugating once must give the same total."""
        params = _afdm(n=16)
        paths = [
            path_from_grid(0, 1, 0.9, params),
            path_from_grid(2, -1, 0.1 + 0.4j, params),
        ]
        total = compute_total_cfr(paths, params, "msml")
        h_sum = sum(
            p.gain * build_path_matrix(p, params, "msml") for p in paths
        )
        daft = build_daft_matrix(params)
        oracle = daft @ h_sum @ daft.conj().T
        assert np.abs(total.entries - oracle).max() <= 1e-10

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            compute_total_cfr([], _afdm(), "msml")


class TestLocIndex:
    def test_origin(self):
        assert loc_index(0, 0, _afdm(n=128)) == 0

    def test_afdm_separates_delay_and_dfs(self):
        params = preset_params("afdm", n=128, q_max=1)
        assert loc_index(1, 0, params) == 3
        assert loc_index(0, 1, params) == 1

    def test_ofdm_collides_across_delays(self):
        params = preset_params("ofdm", n=128)
        assert loc_index(5, 1, params) == 1
        assert loc_index(9, 1, params) == 1

    def test_negative_dfs_wraps_canonically(self):
        params = preset_params("afdm", n=128, q_max=1)
        assert loc_index(0, -1, params) == 127


class TestOverlapProbability:
    def test_afdm_never_overlaps_on_grid(self):
        params = preset_params("afdm", n=128, q_max=1)
        assert cop_enumerate(19, 1, params) == 0.0

    def test_ofdm_always_overlaps_without_dfs(self):
        params = preset_params("ofdm", n=128)
        assert cop_enumerate(15, 0, params) == 1.0

    def test_enumeration_matches_monte_carlo(self):
        params = preset_params("ofdm", n=128)
        config = ChannelConfig(num_paths=2, max_delay=15, max_dfs=2)
        exact = cop_enumerate(15, 2, params)
        trials = 100_000
        sampled = cop_estimate(config, params, trials, np.random.default_rng(9))
        sigma = np.sqrt(exact * (1 - exact) / trials)
        assert abs(sampled - exact) <= 3 * sigma

    def test_waveform_ordering_on_default_grid(self):
        values = {
            kind: cop_enumerate(19, 1, preset_params(kind, n=128, q_max=1))
            for kind in ("afdm", "ocdm", "ofdm")
        }
        assert values["afdm"] <= values["ocdm"] <= values["ofdm"]
        assert values["afdm"] == 0.0
        assert values["ofdm"] > values["ocdm"] > 0.0

    def test_estimate_validates_trials(self):
        params = preset_params("ofdm", n=128)
        config = ChannelConfig(num_paths=2, max_delay=15, max_dfs=2)
        with pytest.raises(ValueError):
            cop_estimate(config, params, 0, np.random.default_rng(0))


class TestOffLocMass:
    def test_zero_for_dfs_only(self):
        params = _afdm(n=32, n_cpp=8)
        for (l, q) in [(0, 0), (3, 1), (7, -1)]:
            cfr = unit_path_cfr(params, float(l), doppler_from_dfs(q, params), "dfs-only")
            assert off_loc_mass(cfr, loc_index(l, q, params)) <= 1e-9

    def test_grows_with_doppler_order(self):
        masses = []
        for order in (1e-4, 1e-3, 1e-2):
            f_c = carrier_for_doppler_order(128, 1500.0, 1, order)
            params = _afdm(n=128, n_cpp=20, f_c=f_c)
            cfr = unit_path_cfr(params, 3.0, doppler_from_dfs(1, params), "msml")
            masses.append(off_loc_mass(cfr, loc_index(3, 1, params)))
        assert masses[0] < masses[1] < masses[2]

    def test_rejects_zero_matrix(self):
        with pytest.raises(ValueError):
            off_loc_mass(np.zeros((4, 4)), 0)
