import mpmath
import numpy as np
import pytest
from scipy import special

from terraprop.emcore import (ETA0, SPEED_OF_LIGHT, RadioConfig, hankel2_0,
                              incident_field, wavenumber)

mpmath.mp.dps = 40


def mp_hankel2_0(x):
    """High-precision reference for H0^(2), independent of scipy."""
    return complex(mpmath.besselj(0, x)) - 1j * complex(mpmath.bessely(0, x))


class TestWavenumber:
    def test_970mhz(self):
        k0 = wavenumber(970e6)
        assert k0 == pytest.approx(2 * np.pi * 970e6 / SPEED_OF_LIGHT, rel=1e-15)
        assert abs(k0 - 20.325) < 0.01

    def test_unit(self):
        assert wavenumber(SPEED_OF_LIGHT / (2 * np.pi)) == pytest.approx(1.0)

    @pytest.mark.parametrize("freq", [0.0, -1.0])
    def test_rejects_nonpositive(self, freq):
        with pytest.raises(ValueError):
            wavenumber(freq)


class TestHankel:
    def test_reference_point(self):
        h = hankel2_0(1.0)
        assert h.real == pytest.approx(0.7651976866, abs=1e-9)
        assert h.imag == pytest.approx(-0.0882569642, abs=1e-9)

    def test_against_high_precision_oracle(self):
        xs = np.logspace(-6, 6, 25)
        for x in xs:
            ref = mp_hankel2_0(x)
            got = hankel2_0(float(x))
            assert abs(got - ref) / abs(ref) < 1e-10

    def test_large_argument_asymptotics(self):
        # the leading-order formula itself deviates by ~1/(8x) in phase
        x = 100.0
        asym = np.sqrt(2 / (np.pi * x)) * np.exp(-1j * (x - np.pi / 4))
        assert abs(hankel2_0(x) - asym) / abs(asym) < 2e-3
        assert abs(abs(hankel2_0(x)) - abs(asym)) / abs(asym) < 1e-4

    def test_small_argument_limits(self):
        h = hankel2_0(1e-8)
        assert h.real == pytest.approx(1.0, abs=1e-12)
        assert h.imag > 10.0  # -Y0 blows up logarithmically

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_rejects_nonpositive(self, x):
        with pytest.raises(ValueError):
            hankel2_0(x)

    def test_rejects_nonpositive_in_array(self):
        with pytest.raises(ValueError):
            hankel2_0(np.array([1.0, 0.0]))

    def test_wronskian_identity(self):
        # J0*Y0' - J0'*Y0 = 2/(pi*x), with J0' = -J1 and Y0' = -Y1
        xs = np.logspace(-3, 3, 40)
        lhs = special.j0(xs) * (-special.y1(xs)) - (-special.j1(xs)) * special.y0(xs)
        assert np.max(np.abs(lhs - 2 / (np.pi * xs))) < 1e-9

    def test_wronskian_finite_differences(self):
        for x in [0.01, 0.5, 3.0, 40.0]:
            h = 1e-6 * max(x, 1.0)
            dj = (special.j0(x + h) - special.j0(x - h)) / (2 * h)
            dy = (special.y0(x + h) - special.y0(x - h)) / (2 * h)
            wr = special.j0(x) * dy - dj * special.y0(x)
            assert wr == pytest.approx(2 / (np.pi * x), rel=1e-6)


class TestIncidentField:
    def test_radial_symmetry(self):
        k0 = wavenumber(100e6)
        src = np.array([3.0, -2.0])
        rng = np.random.default_rng(4)
        base = incident_field(src, src + [50.0, 0.0], k0)
        for theta in rng.uniform(0, 2 * np.pi, 10):
            obs = src + 50.0 * np.array([np.cos(theta), np.sin(theta)])
            assert incident_field(src, obs, k0) == pytest.approx(base, rel=1e-12)

    def test_distance_doubling_magnitude(self):
        k0 = wavenumber(970e6)  # k0*R >> 1
        src = np.zeros(2)
        e1 = incident_field(src, [30.0, 0.0], k0)
        e2 = incident_field(src, [60.0, 0.0], k0)
        assert abs(e2) / abs(e1) == pytest.approx(1 / np.sqrt(2), rel=0.01)

    def test_vectorized_points(self):
        k0 = wavenumber(1e8)
        obs = np.array([[10.0, 0.0], [0.0, 10.0]])
        vals = incident_field([0.0, 0.0], obs, k0)
        assert vals.shape == (2,)
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)

    def test_amplitude_convention(self):
        k0 = wavenumber(1e8)
        r = 25.0
        assert incident_field([0.0, 0.0], [r, 0.0], k0) == pytest.approx(
            -(k0 * ETA0 / 4.0) * hankel2_0(k0 * r), rel=1e-14)

    def test_coincident_points_rejected(self):
        with pytest.raises(ValueError):
            incident_field([1.0, 2.0], [1.0, 2.0], 1.0)


class TestRadioConfig:
    def test_defaults_are_the_standard_setup(self):
        cfg = RadioConfig()
        assert cfg.frequency_hz == 970e6
        assert cfg.tx_height_m == 10.4
        assert cfg.rx_height_m == 2.4
        assert cfg.rx_spacing_m == 50.0
        assert cfg.n_points == 256

    @pytest.mark.parametrize("kwargs", [
        {"frequency_hz": 0.0}, {"tx_height_m": -1.0}, {"rx_height_m": 0.0},
        {"rx_spacing_m": 0.0}, {"n_points": 1},
    ])
    def test_invariants(self, kwargs):
        with pytest.raises(ValueError):
            RadioConfig(**kwargs)
