import numpy as np
import pytest

from terraprop.terrain import (EstimationError, FractalParams, GaussianParams,
                               TerrainProfile, estimate_stats, gen_fractal,
                               gen_gaussian)

GP = GaussianParams(rms_height_m=20.0, corr_length_m=800.0)
FR = FractalParams(variance=30.0, hurst=1.2)


class TestGaussian:
    def test_deterministic(self):
        a = gen_gaussian(GP, 256, 50.0, seed=11)
        b = gen_gaussian(GP, 256, 50.0, seed=11)
        assert np.array_equal(a.heights_m, b.heights_m)
        assert gen_gaussian(GP, 256, 50.0, seed=12).heights_m[0] != a.heights_m[0]

    def test_degenerate_variance(self):
        p = gen_gaussian(GaussianParams(1e-9, 800.0), 256, 50.0, seed=0)
        assert np.max(np.abs(p.heights_m)) < 1e-6

    def test_sample_std_matches_parameters(self):
        data = np.stack([gen_gaussian(GP, 256, 50.0, s).heights_m
                         for s in range(1000)])
        assert 18.0 < np.std(data) < 22.0

    def test_correlation_at_one_length_is_inverse_e(self):
        data = np.stack([gen_gaussian(GP, 256, 50.0, 10_000 + s).heights_m
                         for s in range(2000)])
        c = data - data.mean()
        rho = np.mean(c[:, :-16] * c[:, 16:]) / np.mean(c ** 2)
        assert abs(rho - np.exp(-1)) < 0.1

    def test_preconditions(self):
        with pytest.raises(ValueError):
            gen_gaussian(GP, 1, 50.0, 0)
        with pytest.raises(ValueError):
            gen_gaussian(GP, 16, 0.0, 0)
        with pytest.raises(ValueError):
            GaussianParams(rms_height_m=-1.0)


class TestFractal:
    def test_deterministic(self):
        a = gen_fractal(FR, 256, 50.0, seed=5)
        b = gen_fractal(FR, 256, 50.0, seed=5)
        assert np.array_equal(a.heights_m, b.heights_m)

    def test_truncates_to_requested_length(self):
        assert gen_fractal(FR, 256, 50.0, 0).n_points == 256
        assert gen_fractal(FR, 100, 50.0, 0).n_points == 100

    def test_degenerate_variance_is_flat(self):
        p = gen_fractal(FractalParams(1e-12, 1.2), 256, 50.0, seed=3)
        assert np.max(np.abs(p.heights_m)) < 1e-4

    def test_second_difference_self_affinity(self):
        # Var of second differences scales as lag^(2H); first differences
        # saturate at slope 2 and cannot express H = 1.2.
        data = np.stack([gen_fractal(FR, 256, 50.0, s).heights_m
                         for s in range(500)])
        target = 2.0 ** (2 * FR.hurst)
        for tau in (2, 4):
            a = data[:, 2 * tau:] - 2 * data[:, tau:-tau] + data[:, :-2 * tau]
            b = data[:, 4 * tau:] - 2 * data[:, 2 * tau:-2 * tau] + data[:, :-4 * tau]
            ratio = np.mean(b ** 2) / np.mean(a ** 2)
            assert abs(ratio - target) / target < 0.2

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            FractalParams(variance=0.0)
        with pytest.raises(ValueError):
            FractalParams(hurst=2.0)
        with pytest.raises(ValueError):
            FractalParams(hurst=0.0)


class TestEstimateStats:
    def test_gaussian_corpus(self):
        profiles = [gen_gaussian(GP, 256, 50.0, s) for s in range(1000)]
        stats = estimate_stats(profiles)
        assert 18.0 <= stats.rms_m <= 22.0
        assert 680.0 <= stats.corr_length_m <= 920.0

    def test_fractal_hurst(self):
        profiles = [gen_fractal(FR, 256, 50.0, s) for s in range(500)]
        stats = estimate_stats(profiles)
        assert 1.0 <= stats.hurst <= 1.4

    def test_degenerate_profiles_rejected(self):
        flat = [TerrainProfile(np.zeros(64), 50.0) for _ in range(12)]
        with pytest.raises(EstimationError):
            estimate_stats(flat)

    def test_requires_ten_profiles(self):
        profiles = [gen_gaussian(GP, 64, 50.0, s) for s in range(5)]
        with pytest.raises(ValueError):
            estimate_stats(profiles)

    def test_mixed_spacing_rejected(self):
        profiles = [gen_gaussian(GP, 64, 50.0, s) for s in range(10)]
        profiles.append(gen_gaussian(GP, 64, 25.0, 99))
        with pytest.raises(ValueError):
            estimate_stats(profiles)


class TestTerrainProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            TerrainProfile(np.array([1.0]), 50.0)
        with pytest.raises(ValueError):
            TerrainProfile(np.array([1.0, np.inf]), 50.0)
        with pytest.raises(ValueError):
            TerrainProfile(np.array([1.0, 2.0]), -5.0)
        with pytest.raises(ValueError):
            TerrainProfile(np.array([1.0, 2.0]), 50.0, 0, "weird")

    def test_shift_and_ranges(self):
        p = TerrainProfile(np.array([1.0, 2.0, 3.0]), 50.0)
        assert np.array_equal(p.ranges_m, [0.0, 50.0, 100.0])
        q = p.shifted(10.0)
        assert np.array_equal(q.heights_m, [11.0, 12.0, 13.0])


def test_generation_error_when_cholesky_fails(monkeypatch):
    def boom(_):
        raise np.linalg.LinAlgError("not positive definite")
    monkeypatch.setattr(np.linalg, "cholesky", boom)
    from terraprop.terrain import GenerationError
    with pytest.raises(GenerationError):
        gen_gaussian(GP, 16, 50.0, 0)
