"""Tests for the three channel estimators, index tables and dictionaries."""

import itertools

import numpy as np
import pytest

from afdmsim import (
    AmbiguityError,
    PilotSpec,
    build_dictionary,
    build_index_matrices,
    compute_total_cfr,
    dictionary_for_grid,
    ece_estimate,
    imi_estimate,
    load_dictionary_csv,
    loc_index,
    omp_estimate,
    path_from_grid,
    preset_params,
    save_dictionary_csv,
    unit_path_cfr,
)
from afdmsim.channel import carrier_for_doppler_order, doppler_from_dfs
from afdmsim.linksim import nmse


def _afdm(n=128, n_cpp=20, q_max=1, order=None, f_c=35000.0):
    if order is not None:
        f_c = carrier_for_doppler_order(n, 1500.0, q_max, order)
    return preset_params("afdm", n=n, n_cpp=n_cpp, f_c=f_c, q_max=q_max)


def _observe(paths, params, pilot, mode="msml"):
    """Noise-free training observation for a given channel."""
    symbol = pilot.symbol_vector(params.n)
    return compute_total_cfr(paths, params, mode).entries @ symbol


class TestPilotSpec:
    def test_single_first_layout(self):
        pilot = PilotSpec.single_first()
        s = pilot.symbol_vector(16)
        assert s[0] != 0 and not np.any(s[1:])
        # a lone pilot carries the whole symbol energy by default
        assert abs(np.linalg.norm(s) ** 2 - 16.0) < 1e-9

    def test_energy_matches_symbol_budget(self):
        for placement in ("contiguous", "equispaced"):
            pilot = PilotSpec.pseudo_random(32, placement=placement)
            s = pilot.symbol_vector(128)
            assert abs(np.linalg.norm(s) ** 2 - 128.0) < 1e-9
            assert np.count_nonzero(s) == 32

    def test_equispaced_indices(self):
        pilot = PilotSpec.pseudo_random(64, placement="equispaced")
        np.testing.assert_array_equal(pilot.indices(128), np.arange(0, 128, 2))

    def test_contiguous_indices(self):
        pilot = PilotSpec.pseudo_random(64, placement="contiguous")
        np.testing.assert_array_equal(pilot.indices(128), np.arange(64))

    def test_seeded_values_are_deterministic(self):
        a = PilotSpec.pseudo_random(16, seed=5)
        b = PilotSpec.pseudo_random(16, seed=5)
        assert a.values == b.values

    def test_validation(self):
        with pytest.raises(ValueError):
            PilotSpec(0, "contiguous", ())
        with pytest.raises(ValueError):
            PilotSpec(1, "somewhere", (1.0 + 0j,))
        with pytest.raises(ValueError):
            PilotSpec(1, "contiguous", (2.0 + 0j,))
        with pytest.raises(ValueError):
            PilotSpec.pseudo_random(10).symbol_vector(8)


class TestIndexMatrices:
    def test_peak_positions_mirror_path_locations(self):
        """Without scaling, each cell peaks at the mirrored location index."""
        params = _afdm(n=64, n_cpp=20)
        psi = build_index_matrices(params, 10, 1, 1, PilotSpec.single_first(), "dfs-only")
        for l in range(11):
            for q in (-1, 0, 1):
                expected = (-loc_index(l, q, params)) % params.n
                assert int(psi.tables[0, l, q + 1]) == expected

    def test_transition_region_has_duplicates(self):
        """In the drift transition the first-peak table stops being one-to-one."""
        params = _afdm(order=7.5e-3)
        psi = build_index_matrices(params, 19, 1, 1, PilotSpec.single_first(), "msml")
        assert len(psi.duplicate_cells()) > 0

    def test_depth_indices_match_full_sort(self):
        params = _afdm(n=32, n_cpp=8, order=1e-2)
        pilot = PilotSpec.single_first()
        psi = build_index_matrices(params, 6, 1, 2, pilot, "msml")
        s = pilot.symbol_vector(32)
        for l in range(7):
            for q in (-1, 0, 1):
                z = unit_path_cfr(params, float(l), doppler_from_dfs(q, params), "msml") @ s
                order = np.argsort(-np.abs(z), kind="stable")
                assert int(psi.tables[0, l, q + 1]) == order[0]
                assert int(psi.tables[1, l, q + 1]) == order[1]

    def test_rows_are_distinct_across_depth(self):
        params = _afdm(order=1e-3)
        psi = build_index_matrices(params, 19, 1, 3, PilotSpec.single_first(), "msml")
        for l in range(20):
            for qi in range(3):
                column = psi.tables[:, l, qi]
                assert len(set(column.tolist())) == 3

    def test_validates_depth(self):
        with pytest.raises(ValueError):
            build_index_matrices(_afdm(), 5, 1, 0, PilotSpec.single_first())


class TestEce:
    def test_single_path_exact_recovery(self):
        params = _afdm(order=1e-4)
        pilot = PilotSpec.single_first()
        gain = 0.8 - 0.3j
        paths = [path_from_grid(4, 1, gain, params)]
        z = _observe(paths, params, pilot)
        result = ece_estimate(z, pilot, params, 19, 1, num_paths=1)
        assert len(result.paths) == 1
        rec = result.paths[0]
        assert (round(rec.delay_samples), rec.dfs_bins) == (4, 1)
        assert abs(rec.gain - gain) <= 1e-6

    def test_three_paths_without_scaling(self):
        params = _afdm()
        pilot = PilotSpec.single_first()
        truth = [
            path_from_grid(0, 0, 0.9, params),
            path_from_grid(3, 1, 0.4j, params),
            path_from_grid(11, -1, -0.2 + 0.1j, params),
        ]
        z = _observe(truth, params, pilot, mode="dfs-only")
        result = ece_estimate(z, pilot, params, 19, 1, num_paths=3, mode="dfs-only")
        recovered = {(round(p.delay_samples), p.dfs_bins): p.gain for p in result.paths}
        for p in truth:
            key = (round(p.delay_samples(params)), round(p.dfs_bins(params)))
            assert key in recovered
            assert abs(recovered[key] - p.gain) <= 1e-6

    def test_high_scaling_raises_ambiguity(self):
        params = _afdm(order=1e-2)
        pilot = PilotSpec.single_first()
        z = _observe([path_from_grid(0, 1, 1.0, params)], params, pilot)
        with pytest.raises(AmbiguityError):
            ece_estimate(z, pilot, params, 19, 1, num_paths=1)

    def test_rejects_non_separating_chirp(self):
        params = preset_params("ofdm", n=128, n_cpp=20)
        pilot = PilotSpec.single_first()
        with pytest.raises(ValueError):
            ece_estimate(np.zeros(128), pilot, params, 19, 1, num_paths=1)

    def test_threshold_stopping_on_noise(self):
        params = _afdm(order=1e-4)
        pilot = PilotSpec.single_first()
        rng = np.random.default_rng(0)
        noise_std = 0.05
        z = noise_std / np.sqrt(2) * (rng.standard_normal(128) + 1j * rng.standard_normal(128))
        result = ece_estimate(z, pilot, params, 19, 1, noise_std=noise_std)
        assert result.paths == []


class TestImi:
    def _psi(self, params, pilot, depth=3):
        return build_index_matrices(params, 19, 1, depth, pilot, "msml")

    @pytest.mark.parametrize("order", [1e-4, 1e-3])
    def test_single_path_recovery(self, order):
        params = _afdm(order=order)
        pilot = PilotSpec.single_first()
        psi = self._psi(params, pilot)
        gain = 0.6 + 0.4j
        paths = [path_from_grid(7, -1, gain, params)]
        z = _observe(paths, params, pilot)
        result = imi_estimate(z, pilot, psi, params, max_paths=1)
        rec = result.paths[0]
        assert (round(rec.delay_samples), rec.dfs_bins) == (7, -1)
        assert abs(rec.gain - gain) <= 1e-3

    def test_resolves_transition_ambiguity_via_second_peaks(self):
        """When two cells share a first peak, the second-peak comparison decides."""
        params = _afdm(order=7.5e-3)
        pilot = PilotSpec.single_first()
        psi = self._psi(params, pilot)
        groups = psi.duplicate_cells()
        assert groups, "expected duplicates in the transition regime"
        cells = sorted(groups[0])
        # transmit the cell that would lose a naive lowest-index tie-break
        l_true, q_true = cells[-1]
        z = _observe([path_from_grid(l_true, q_true, 1.0, params)], params, pilot)
        result = imi_estimate(z, pilot, psi, params, max_paths=1)
        rec = result.paths[0]
        assert (round(rec.delay_samples), rec.dfs_bins) == (l_true, q_true)
        assert result.tie_breaks == 0

    def test_pure_noise_returns_nothing_with_threshold(self):
        params = _afdm(order=1e-3)
        pilot = PilotSpec.single_first()
        psi = self._psi(params, pilot)
        rng = np.random.default_rng(1)
        noise_std = 0.05
        z = noise_std / np.sqrt(2) * (rng.standard_normal(128) + 1j * rng.standard_normal(128))
        result = imi_estimate(z, pilot, psi, params, noise_std=noise_std)
        assert result.paths == [] and result.iterations == 0

    def test_multi_path_cancellation(self):
        params = _afdm(order=1e-3)
        pilot = PilotSpec.single_first()
        psi = self._psi(params, pilot)
        truth = [
            path_from_grid(2, 0, 1.0, params),
            path_from_grid(9, 1, 0.5j, params),
            path_from_grid(15, -1, 0.25, params),
        ]
        z = _observe(truth, params, pilot)
        result = imi_estimate(z, pilot, psi, params, max_paths=3)
        got = {(round(p.delay_samples), p.dfs_bins) for p in result.paths}
        want = {(2, 0), (9, 1), (15, -1)}
        assert got == want
        assert result.residual_norm < 0.05 * np.linalg.norm(z)

    def test_requires_stopping_rule(self):
        params = _afdm()
        pilot = PilotSpec.single_first()
        psi = self._psi(params, pilot)
        with pytest.raises(ValueError):
            imi_estimate(np.zeros(128), pilot, psi, params)


class TestDictionary:
    def test_default_grid_size(self):
        params = _afdm()
        pilot = PilotSpec.pseudo_random(64)
        dictionary = dictionary_for_grid(params, 19, 1, pilot)
        assert dictionary.num_atoms == 60
        assert dictionary.atoms.shape == (128, 60)

    def test_continuous_grid_constructor(self):
        params = _afdm()
        a_max = doppler_from_dfs(1, params)
        dictionary = build_dictionary(
            PilotSpec.pseudo_random(64), tau_max=19.0 / 1500.0, a_max=a_max,
            delta_a=a_max, params=params,
        )
        assert dictionary.num_atoms == 60
        dopplers = sorted(set(dictionary.dopplers.tolist()))
        assert dopplers == sorted([-a_max, 0.0, a_max])

    def test_separable_atoms_without_scaling(self):
        """One-hot-dominant distinct atoms under the separating preset."""
        params = _afdm(n=32, n_cpp=8)
        pilot = PilotSpec(1, "single-first", (1.0 + 0j,), amplitude=1.0)
        dictionary = dictionary_for_grid(params, 5, 1, pilot, mode="dfs-only")
        peaks = np.argmax(np.abs(dictionary.atoms), axis=0)
        assert len(set(peaks.tolist())) == dictionary.num_atoms
        mags = np.abs(dictionary.atoms)
        assert np.all(mags.max(axis=0) > 0.99)

    def test_columns_match_direct_computation(self):
        params = _afdm(n=32, n_cpp=8, order=1e-3)
        pilot = PilotSpec.pseudo_random(16)
        dictionary = dictionary_for_grid(params, 4, 1, pilot)
        s = pilot.symbol_vector(32)
        col = 0
        for l in range(5):
            for q in (-1, 0, 1):
                direct = unit_path_cfr(params, float(l), doppler_from_dfs(q, params)) @ s
                np.testing.assert_allclose(dictionary.atoms[:, col], direct, atol=1e-12)
                col += 1

    def test_column_cap(self):
        params = _afdm()
        with pytest.raises(ValueError):
            build_dictionary(
                PilotSpec.pseudo_random(64), tau_max=19.0 / 1500.0, a_max=1e-3,
                delta_a=1e-6, params=params,
            )

    def test_csv_round_trip(self, tmp_path):
        params = _afdm(n=32, n_cpp=8)
        pilot = PilotSpec.pseudo_random(8)
        dictionary = dictionary_for_grid(params, 3, 1, pilot)
        save_dictionary_csv(dictionary, tmp_path)
        loaded = load_dictionary_csv(tmp_path)
        np.testing.assert_allclose(loaded.atoms, dictionary.atoms, atol=1e-15)
        assert loaded.grid == dictionary.grid
        assert loaded.pilot == dictionary.pilot
        assert loaded.mode == dictionary.mode


class TestOmp:
    def test_single_path_selects_true_atom_first(self):
        params = _afdm(order=1e-3)
        pilot = PilotSpec.pseudo_random(128)
        dictionary = dictionary_for_grid(params, 19, 1, pilot)
        paths = [path_from_grid(5, 1, 0.7 - 0.2j, params)]
        z = _observe(paths, params, pilot)
        result = omp_estimate(z, dictionary, params, num_paths=1)
        rec = result.paths[0]
        assert (round(rec.delay_samples), rec.dfs_bins) == (5, 1)
        assert result.residual_norm <= 1e-8
        assert abs(rec.gain - (0.7 - 0.2j)) <= 1e-6

    @pytest.mark.parametrize("order", [1e-4, 1e-3, 1e-2])
    def test_exact_recovery_across_scaling_orders(self, order):
        params = _afdm(order=order)
        pilot = PilotSpec.pseudo_random(128)
        dictionary = dictionary_for_grid(params, 19, 1, pilot)
        gain = 0.9 + 0.1j
        z = _observe([path_from_grid(11, -1, gain, params)], params, pilot)
        result = omp_estimate(z, dictionary, params, num_paths=1)
        rec = result.paths[0]
        assert (round(rec.delay_samples), rec.dfs_bins) == (11, -1)
        assert abs(rec.gain - gain) <= 1e-6

    def test_three_paths_match_exhaustive_support_search(self):
        """Greedy support must match the best support found by exhaustive LS."""
        params = _afdm(n=32, n_cpp=8, order=1e-3)
        pilot = PilotSpec.pseudo_random(32)
        dictionary = dictionary_for_grid(params, 4, 1, pilot)  # 15 atoms
        truth = [
            path_from_grid(0, 0, 1.0, params),
            path_from_grid(2, 1, 0.6j, params),
            path_from_grid(4, -1, 0.3, params),
        ]
        z = _observe(truth, params, pilot)
        result = omp_estimate(z, dictionary, params, num_paths=3)
        best_support, best_res = None, np.inf
        for support in itertools.combinations(range(dictionary.num_atoms), 3):
            sub = dictionary.atoms[:, support]
            gains, _, _, _ = np.linalg.lstsq(sub, z, rcond=None)
            res = np.linalg.norm(z - sub @ gains)
            if res < best_res:
                best_res, best_support = res, support
        got = set()
        for p in result.paths:
            col = int(round(p.delay_samples)) * 3 + (p.dfs_bins + 1)
            got.add(col)
        assert got == set(best_support)
        assert result.residual_norm <= best_res + 1e-9

    def test_residual_norm_nonincreasing_and_no_reselection(self):
        params = _afdm(n=32, n_cpp=8, order=1e-3)
        pilot = PilotSpec.pseudo_random(32)
        dictionary = dictionary_for_grid(params, 4, 1, pilot)
        rng = np.random.default_rng(3)
        z = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        norms = []
        for k in range(1, 7):
            result = omp_estimate(z, dictionary, params, num_paths=k)
            norms.append(result.residual_norm)
            cols = [
                int(round(p.delay_samples)) * 3 + (p.dfs_bins + 1) for p in result.paths
            ]
            assert len(set(cols)) == len(cols)
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_residual_tolerance_stopping(self):
        params = _afdm(order=1e-3)
        pilot = PilotSpec.pseudo_random(128)
        dictionary = dictionary_for_grid(params, 19, 1, pilot)
        truth = [path_from_grid(3, 0, 1.0, params), path_from_grid(8, 1, 0.5, params)]
        z = _observe(truth, params, pilot)
        result = omp_estimate(z, dictionary, params, residual_tol=1e-6)
        assert result.iterations == 2
        assert result.residual_norm <= 1e-6 * np.linalg.norm(z)

    def test_reconstruction_matches_truth_noiseless(self):
        params = _afdm(order=1e-3)
        pilot = PilotSpec.pseudo_random(128)
        dictionary = dictionary_for_grid(params, 19, 1, pilot)
        truth = [
            path_from_grid(1, 0, 0.8, params),
            path_from_grid(6, -1, 0.4j, params),
        ]
        z = _observe(truth, params, pilot)
        result = omp_estimate(z, dictionary, params, num_paths=2)
        reference = compute_total_cfr(truth, params, "msml")
        assert nmse(result.cfr_estimate, reference) <= 1e-12

    def test_validates_inputs(self):
        params = _afdm(n=32, n_cpp=8)
        pilot = PilotSpec.pseudo_random(8)
        dictionary = dictionary_for_grid(params, 3, 1, pilot)
        with pytest.raises(ValueError):
            omp_estimate(np.zeros(32), dictionary, params)
        with pytest.raises(ValueError):
            omp_estimate(np.zeros(31), dictionary, params, num_paths=1)


class TestEstimatorAgreement:
    def test_imi_and_omp_agree_on_grid(self):
        """Peak-table and dictionary recovery find the same cells at moderate scaling."""
        params = _afdm(order=1e-3)
        single = PilotSpec.single_first()
        multi = PilotSpec.pseudo_random(128)
        psi = build_index_matrices(params, 19, 1, 3, single, "msml")
        dictionary = dictionary_for_grid(params, 19, 1, multi)
        rng = np.random.default_rng(4)
        for _ in range(5):
            cells = rng.choice(20, size=3, replace=False)
            qs = rng.integers(-1, 2, size=3)
            gains = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) / np.sqrt(2)
            paths = [
                path_from_grid(int(l), int(q), g, params)
                for l, q, g in zip(cells, qs, gains)
            ]
            want = {(int(l), int(q)) for l, q in zip(cells, qs)}
            z_imi = _observe(paths, params, single)
            z_omp = _observe(paths, params, multi)
            got_imi = {
                (round(p.delay_samples), p.dfs_bins)
                for p in imi_estimate(z_imi, single, psi, params, max_paths=3).paths
            }
            got_omp = {
                (round(p.delay_samples), p.dfs_bins)
                for p in omp_estimate(z_omp, dictionary, params, num_paths=3).paths
            }
            assert got_imi == want
            assert got_omp == want

    def test_ece_matches_imi_when_applicable(self):
        """Wherever peak inversion succeeds, the iterative method finds the same set."""
        params = _afdm(order=1e-4)
        pilot = PilotSpec.single_first()
        psi = build_index_matrices(params, 19, 1, 3, pilot, "msml")
        rng = np.random.default_rng(5)
        for _ in range(5):
            ls = rng.choice(20, size=3, replace=False)
            qs = rng.integers(-1, 2, size=3)
            gains = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            paths = [
                path_from_grid(int(l), int(q), g, params)
                for l, q, g in zip(ls, qs, gains)
            ]
            z = _observe(paths, params, pilot)
            got_ece = {
                (round(p.delay_samples), p.dfs_bins)
                for p in ece_estimate(z, pilot, params, 19, 1, num_paths=3).paths
            }
            got_imi = {
                (round(p.delay_samples), p.dfs_bins)
                for p in imi_estimate(z, pilot, psi, params, max_paths=3).paths
            }
            assert got_ece == got_imi
