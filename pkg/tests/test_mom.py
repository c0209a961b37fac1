import numpy as np
import pytest

from terraprop import baselines
from terraprop.emcore import (ETA0, SPEED_OF_LIGHT, RadioConfig, hankel2_0,
                              incident_field, wavenumber)
from terraprop.mom import (DB_FLOOR, BasisSet, SolverConfig, SurfaceCurrent,
                           collocation_residual, discretize, free_space_db,
                           path_gain, receiver_positions, scattered_field,
                           solve_exact, solve_faffa, solve_profile,
                           transmitter_position, z_element, z_self)
from terraprop.terrain import GaussianParams, TerrainProfile, gen_gaussian

GP = GaussianParams(20.0, 800.0)
DESK_FREQ = 9.4e6          # N ~ 4080 on a 256-point, 50 m spaced profile
DESK_GPS = 6               # group subdivision used at desk scale


def desk_cfg(n_points, method="exact", freq=DESK_FREQ, **kw):
    radio = RadioConfig(frequency_hz=freq, n_points=n_points)
    return SolverConfig(radio=radio, method=method, **kw)


def solve_both_ways(profile, freq, gps=DESK_GPS, near=2.0):
    pe = solve_profile(profile, desk_cfg(profile.n_points, "exact", freq))
    pf = solve_profile(profile, desk_cfg(profile.n_points, "faffa", freq,
                                         groups_per_segment=gps,
                                         near_group_factor=near))
    return pe, pf


def rms(x):
    return float(np.sqrt(np.mean(np.asarray(x) ** 2)))


class TestDiscretize:
    def test_flat_two_point_profile(self):
        # 50 m span, lambda = 50 m, 5 samples per wavelength -> 5 unknowns
        prof = TerrainProfile(np.zeros(2), 50.0)
        freq = SPEED_OF_LIGHT / 50.0
        cfg = SolverConfig(radio=RadioConfig(frequency_hz=freq, n_points=2),
                           samples_per_wavelength=5.0)
        basis = discretize(prof, cfg)
        assert basis.n_unknowns == 5
        assert basis.n_groups == 1
        assert np.allclose(basis.midpoints[:, 0], [5.0, 15.0, 25.0, 35.0, 45.0])
        assert np.allclose(basis.midpoints[:, 1], 0.0)
        assert basis.group_spacing[0] == pytest.approx(10.0)
        assert np.allclose(basis.group_centres[0], [25.0, 0.0])

    def test_full_scale_unknown_count(self):
        prof = gen_gaussian(GP, 256, 50.0, seed=0)
        basis = discretize(prof, SolverConfig(radio=RadioConfig()))
        assert 4.0e5 < basis.n_unknowns < 4.2e5
        assert basis.n_groups == 255

    def test_groups_partition_contiguously(self):
        prof = gen_gaussian(GP, 16, 50.0, seed=1)
        basis = discretize(prof, desk_cfg(16))
        assert basis.group_offsets[0] == 0
        assert basis.group_offsets[-1] == basis.n_unknowns
        assert np.array_equal(
            basis.group_index,
            np.repeat(np.arange(basis.n_groups), np.diff(basis.group_offsets)))

    def test_rejects_coarse_sampling(self):
        with pytest.raises(ValueError):
            SolverConfig(radio=RadioConfig(), samples_per_wavelength=1.5)


@pytest.fixture(scope="module")
def small_basis():
    prof = gen_gaussian(GP, 8, 50.0, seed=3)
    cfg = desk_cfg(8)
    return discretize(prof, cfg), wavenumber(cfg.radio.frequency_hz)


class TestMatrixElements:
    def test_symmetric_in_distance(self, small_basis):
        basis, k0 = small_basis
        # same group => same quadrature length, so swapping indices is exact
        assert z_element(2, 0, basis, k0) == pytest.approx(
            z_element(0, 2, basis, k0), rel=1e-14)

    def test_inverse_sqrt_distance_decay(self, small_basis):
        basis, k0 = small_basis
        n = basis.n_unknowns
        d1 = np.linalg.norm(basis.midpoints[32] - basis.midpoints[0])
        d2 = np.linalg.norm(basis.midpoints[n - 1] - basis.midpoints[0])
        ratio = abs(z_element(n - 1, 0, basis, k0)) / abs(z_element(32, 0, basis, k0))
        assert ratio == pytest.approx(np.sqrt(d1 / d2), rel=0.02)

    def test_linear_in_quadrature_length(self):
        prof = TerrainProfile(np.zeros(2), 50.0)
        freq = SPEED_OF_LIGHT / 50.0
        radio = RadioConfig(frequency_hz=freq, n_points=2)
        coarse = discretize(prof, SolverConfig(radio=radio, samples_per_wavelength=5))
        fine = discretize(prof, SolverConfig(radio=radio, samples_per_wavelength=10))
        k0 = wavenumber(freq)
        # compare elements with identical separation but halved pulse width
        zc = z_element(1, 0, coarse, k0)       # spacing 10 m, delta 10
        zf = z_element(2, 0, fine, k0)         # spacing 5 m -> same 10 m gap
        assert abs(zc) == pytest.approx(2 * abs(zf), rel=1e-12)

    def test_self_term_small_argument_behaviour(self):
        prof = TerrainProfile(np.zeros(2), 50.0)
        freq = 1e6  # k0*delta ~ 0.1 regime
        radio = RadioConfig(frequency_hz=freq, n_points=2)
        basis = discretize(prof, SolverConfig(radio=radio, samples_per_wavelength=60))
        k0 = wavenumber(freq)
        z = z_self(0, basis, k0)
        assert z.imag > 0
        assert z.imag > z.real > 0
        assert z_self(1, basis, k0) == z  # uniform pulse width

    def test_self_term_vanishes_with_support(self):
        prof = TerrainProfile(np.zeros(2), 50.0)
        radio = RadioConfig(frequency_hz=3e8, n_points=2)
        z_small = z_self(0, discretize(
            prof, SolverConfig(radio=radio, samples_per_wavelength=1000)),
            wavenumber(3e8))
        z_big = z_self(0, discretize(
            prof, SolverConfig(radio=radio, samples_per_wavelength=10)),
            wavenumber(3e8))
        assert abs(z_small) < abs(z_big) / 30

    def test_diagonal_rejected_in_z_element(self, small_basis):
        basis, k0 = small_basis
        with pytest.raises(ValueError):
            z_element(3, 3, basis, k0)


class TestSolveExact:
    def test_single_unknown(self):
        prof = TerrainProfile(np.zeros(2), 50.0)
        freq = SPEED_OF_LIGHT / 500.0  # lambda = 500 m -> 1 pulse on 50 m
        radio = RadioConfig(frequency_hz=freq, n_points=2)
        basis = discretize(prof, SolverConfig(radio=radio, samples_per_wavelength=2))
        assert basis.n_unknowns == 1
        k0 = wavenumber(freq)
        rhs = np.array([1.0 + 2.0j])
        j = solve_exact(basis, rhs, k0).coeffs
        assert j[0] == pytest.approx(rhs[0] / z_self(0, basis, k0), rel=1e-14)

    def test_causality_in_rhs(self):
        prof = gen_gaussian(GP, 16, 50.0, seed=4)
        cfg = desk_cfg(16)
        basis = discretize(prof, cfg)
        k0 = wavenumber(cfg.radio.frequency_hz)
        rhs = incident_field(transmitter_position(prof, cfg.radio),
                             basis.midpoints, k0)
        j0_ = solve_exact(basis, rhs, k0).coeffs
        k = basis.n_unknowns // 2
        rhs2 = rhs.copy()
        rhs2[k] *= 1.5
        j1_ = solve_exact(basis, rhs2, k0).coeffs
        assert np.array_equal(j0_[:k], j1_[:k])
        assert j0_[k] != j1_[k]

    def test_causality_in_terrain(self):
        # heights strictly right of a basis function's group cannot move it
        prof_a = gen_gaussian(GP, 16, 50.0, seed=5)
        heights_b = prof_a.heights_m.copy()
        heights_b[-1] += 40.0
        prof_b = TerrainProfile(heights_b, 50.0)
        cfg = desk_cfg(16)
        k0 = wavenumber(cfg.radio.frequency_hz)
        cur = []
        for prof in (prof_a, prof_b):
            basis = discretize(prof, cfg)
            rhs = incident_field(transmitter_position(prof, cfg.radio),
                                 basis.midpoints, k0)
            cur.append(solve_exact(basis, rhs, k0).coeffs)
        shared = discretize(prof_a, cfg).group_offsets[-2]  # all but last group
        assert np.array_equal(cur[0][:shared], cur[1][:shared])

    def test_collocation_residual(self):
        prof = gen_gaussian(GP, 128, 50.0, seed=6)
        cfg = desk_cfg(128)
        basis = discretize(prof, cfg)
        assert basis.n_unknowns > 1500
        k0 = wavenumber(cfg.radio.frequency_hz)
        rhs = incident_field(transmitter_position(prof, cfg.radio),
                             basis.midpoints, k0)
        cur = solve_exact(basis, rhs, k0)
        res = collocation_residual(basis, cur, rhs, k0)
        assert np.max(np.abs(res)) < 1e-10 * np.max(np.abs(rhs))

    def test_rhs_length_checked(self, small_basis):
        basis, k0 = small_basis
        with pytest.raises(ValueError):
            solve_exact(basis, np.ones(3, complex), k0)


class TestSolveFaffa:
    def test_single_small_group_is_bit_equivalent(self):
        # one group, below the direct-solve threshold: the same back
        # substitution runs in both drivers
        prof = TerrainProfile(np.zeros(2), 50.0)
        freq = SPEED_OF_LIGHT / 50.0
        radio = RadioConfig(frequency_hz=freq, n_points=2)
        basis = discretize(prof, SolverConfig(radio=radio, samples_per_wavelength=5))
        assert basis.n_groups == 1 and basis.n_unknowns == 5
        k0 = wavenumber(freq)
        rhs = incident_field([-10.0, 30.0], basis.midpoints, k0)
        je = solve_exact(basis, rhs, k0).coeffs
        jf = solve_faffa(basis, rhs, k0).coeffs
        assert np.array_equal(je, jf)

    def test_single_large_group_uses_fft_path(self):
        # one straight slanted segment, hundreds of unknowns: exercises the
        # divide-and-conquer Toeplitz convolution
        prof = TerrainProfile(np.array([0.0, 20.0]), 50.0)
        radio = RadioConfig(frequency_hz=1.7e9, n_points=2)
        basis = discretize(prof, SolverConfig(radio=radio))
        assert basis.n_groups == 1 and basis.n_unknowns > 500
        k0 = wavenumber(1.7e9)
        rhs = incident_field([-200.0, 180.0], basis.midpoints, k0)
        je = solve_exact(basis, rhs, k0).coeffs
        jf = solve_faffa(basis, rhs, k0).coeffs
        assert np.max(np.abs(je - jf)) < 1e-10 * np.max(np.abs(je))

    def test_all_near_groups_match_exact(self):
        prof = gen_gaussian(GP, 8, 50.0, seed=8)
        cfg = desk_cfg(8)
        basis = discretize(prof, cfg)
        k0 = wavenumber(cfg.radio.frequency_hz)
        rhs = incident_field(transmitter_position(prof, cfg.radio),
                             basis.midpoints, k0)
        je = solve_exact(basis, rhs, k0).coeffs
        jf = solve_faffa(basis, rhs, k0, near_group_factor=1e9).coeffs
        assert np.max(np.abs(je - jf)) < 1e-12 * np.max(np.abs(je))

    def test_pure_translation_accuracy(self):
        # far-field phase translation alone stays within 1 dB rms
        prof = gen_gaussian(GP, 256, 50.0, seed=1)
        pe, pf = solve_both_ways(prof, DESK_FREQ, gps=DESK_GPS, near=0.0)
        assert rms(pf.values_db - pe.values_db) <= 1.0

    def test_near_group_handling_tightens_agreement(self):
        prof = gen_gaussian(GP, 256, 50.0, seed=1)
        pe, pf = solve_both_ways(prof, DESK_FREQ, gps=DESK_GPS, near=2.0)
        assert rms(pf.values_db - pe.values_db) <= 0.3


class TestFields:
    def test_zero_current_zero_field(self, small_basis):
        basis, k0 = small_basis
        cur = SurfaceCurrent(np.zeros(basis.n_unknowns, complex))
        field = scattered_field(cur, basis, [[100.0, 200.0]], k0)
        assert field[0] == 0.0

    def test_single_unit_coefficient(self, small_basis):
        basis, k0 = small_basis
        coeffs = np.zeros(basis.n_unknowns, complex)
        coeffs[2] = 1.0
        obs = basis.midpoints[2] + [0.0, 120.0]
        field = scattered_field(SurfaceCurrent(coeffs), basis, [obs], k0)
        delta = basis.group_spacing[basis.group_index[2]]
        expected = -(k0 * ETA0 / 4) * delta * hankel2_0(k0 * 120.0)
        assert field[0] == pytest.approx(expected, rel=1e-12)

    def test_near_singular_observation_rejected(self, small_basis):
        basis, k0 = small_basis
        obs = basis.midpoints[3] + [0.0, 1e-6]
        with pytest.raises(ValueError):
            scattered_field(SurfaceCurrent(np.ones(basis.n_unknowns, complex)),
                            basis, [obs], k0)

    def test_nonfinite_current_rejected(self):
        with pytest.raises(ValueError):
            SurfaceCurrent(np.array([1.0, np.nan], complex))


class TestPathGain:
    def test_free_space_decade_slope(self):
        k0 = wavenumber(970e6)
        tx = np.zeros(2)
        rx = np.array([[100.0, 0.0], [1000.0, 0.0]])
        fields = incident_field(tx, rx, k0)  # pure line source, no terrain
        pl = path_gain(fields, rx, tx, k0)
        drop = pl.values_db[0] - pl.values_db[1]
        assert abs(drop - 20.0) < 0.2
        # one metre from the source is the 0 dB reference
        ref = path_gain(incident_field(tx, [[1.0, 0.0]], k0),
                        [[1.0, 0.0]], tx, k0)
        assert abs(ref.values_db[0]) < 1e-9

    def test_zero_field_clamps(self):
        pl = path_gain([0.0 + 0.0j], [[10.0, 0.0]], [0.0, 0.0], 1.0)
        assert pl.values_db[0] == DB_FLOOR

    def test_zero_distance_excluded(self):
        pl = path_gain([1.0 + 0.0j, 1.0 + 0.0j], [[0.0, 0.0], [5.0, 0.0]],
                       [0.0, 0.0], 1.0)
        assert np.isnan(pl.values_db[0])
        assert np.isfinite(pl.values_db[1])

    def test_free_space_db_helper(self):
        k0 = wavenumber(1e8)
        assert free_space_db(1.0, k0) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(ValueError):
            free_space_db(0.0, k0)


class TestSolveProfile:
    def test_two_ray_flat_plane(self):
        # small flat-plane fixture; the full-size check runs in acceptance
        n, spacing, freq = 32, 25.0, 1.2e8
        prof = TerrainProfile(np.zeros(n), spacing)
        radio = RadioConfig(frequency_hz=freq, n_points=n, rx_spacing_m=spacing)
        pl = solve_profile(prof, SolverConfig(radio=radio, method="exact"))
        k0 = wavenumber(freq)
        two = np.array([baselines.two_ray_reference(k * spacing, 10.4, 2.4, k0)
                        for k in range(1, n)])
        assert rms(pl.values_db[1:] - two) <= 1.5

    def test_height_shift_invariance(self):
        prof = gen_gaussian(GP, 64, 50.0, seed=5)
        for method, gps in (("exact", 1), ("faffa", DESK_GPS)):
            cfg = desk_cfg(64, method, groups_per_segment=gps)
            a = solve_profile(prof, cfg)
            b = solve_profile(prof.shifted(35.0), cfg)
            assert np.max(np.abs(a.values_db - b.values_db)) <= 1e-9

    def test_energy_stays_below_constructive_bound(self):
        k0 = wavenumber(DESK_FREQ)
        for seed in range(3):
            prof = gen_gaussian(GP, 64, 50.0, seed)
            cfg = desk_cfg(64)
            pl = solve_profile(prof, cfg)
            tx = transmitter_position(prof, cfg.radio)
            rx = receiver_positions(prof, cfg.radio)
            fs = free_space_db(np.hypot(rx[:, 0] - tx[0], rx[:, 1] - tx[1]), k0)
            assert np.max(pl.values_db - fs) <= 6.0

    def test_discretization_self_convergence(self):
        prof = gen_gaussian(GP, 64, 50.0, seed=2)
        radio = RadioConfig(frequency_hz=4.7e7, n_points=64)
        p10 = solve_profile(prof, SolverConfig(radio=radio, method="exact",
                                               samples_per_wavelength=10))
        p20 = solve_profile(prof, SolverConfig(radio=radio, method="exact",
                                               samples_per_wavelength=20))
        assert rms(p20.values_db - p10.values_db) < 0.5

    def test_config_mismatches_rejected(self):
        prof = gen_gaussian(GP, 64, 50.0, seed=0)
        with pytest.raises(ValueError):
            solve_profile(prof, desk_cfg(128))
        radio = RadioConfig(frequency_hz=DESK_FREQ, n_points=64, rx_spacing_m=25.0)
        with pytest.raises(ValueError):
            solve_profile(prof, SolverConfig(radio=radio))


@pytest.mark.fullscale
def test_full_scale_profile_solve():
    """Full 970 MHz solve of one profile (~4e5 unknowns). Slow; run with
    -m fullscale when needed."""
    prof = gen_gaussian(GP, 256, 50.0, seed=0)
    cfg = SolverConfig(radio=RadioConfig(), method="faffa")
    pl = solve_profile(prof, cfg)
    finite = pl.values_db[np.isfinite(pl.values_db)]
    assert finite.size == 256
    assert -220.0 < np.mean(finite) < -60.0


def test_singular_diagonal_rejected():
    # a vanishing quadrature segment makes the self term underflow
    basis = BasisSet(
        midpoints=np.zeros((2, 2)),
        seg_len_m=0.0,
        group_index=np.array([0, 0]),
        group_centres=np.zeros((1, 2)),
        group_offsets=np.array([0, 2]),
        group_spacing=np.array([0.0]),
        group_length=np.array([0.0]),
    )
    with pytest.raises(ValueError, match="singular"):
        solve_exact(basis, np.ones(2, complex), 1.0)
