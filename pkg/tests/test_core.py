import numpy as np
import pytest

from ptstring.core import (PTConfig, SpatialGrid, StringParams, TriGrid,
                           check_prescribed_time, integrate_1d,
                           integrate_lemma2_check, minimal_time, wave_speed)


@pytest.fixture
def paper_params():
    return StringParams(rho0=1.0, Tf=45.0, M=1.0)


class TestStringParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            StringParams(rho0=0.0, Tf=1.0)
        with pytest.raises(ValueError):
            StringParams(rho0=1.0, Tf=-1.0)
        with pytest.raises(ValueError):
            StringParams(rho0=1.0, Tf=1.0, M=-0.1)
        with pytest.raises(ValueError):
            StringParams(rho0=1.0, Tf=1.0, L=2.0)

    def test_massless_tip_allowed(self):
        assert StringParams(rho0=2.0, Tf=3.0, M=0.0).M == 0.0


class TestWaveSpeed:
    def test_reference_values(self, paper_params):
        assert wave_speed(paper_params) == pytest.approx(6.7082039, abs=1e-6)
        assert wave_speed(StringParams(rho0=1.0, Tf=1.0)) == 1.0
        assert wave_speed(StringParams(rho0=1.0, Tf=4.0)) == 2.0

    def test_minimal_time(self, paper_params):
        assert minimal_time(paper_params) == pytest.approx(0.2981424, abs=1e-6)
        assert minimal_time(StringParams(rho0=1.0, Tf=4.0)) == 1.0
        assert minimal_time(StringParams(rho0=1.0, Tf=1.0)) == 2.0

    def test_round_trip_identity(self, paper_params):
        # product against 2L is exact up to rounding
        assert minimal_time(paper_params) * wave_speed(paper_params) == pytest.approx(2.0, rel=1e-14)


class TestPTConfig:
    def test_gate_on_minimal_time(self, paper_params):
        check_prescribed_time(paper_params, PTConfig(T=3.0, mu0=5.0))
        with pytest.raises(ValueError, match="minimal"):
            check_prescribed_time(paper_params, PTConfig(T=0.2, mu0=5.0))

    def test_field_validation(self):
        with pytest.raises(ValueError):
            PTConfig(T=3.0, mu0=0.0)
        with pytest.raises(ValueError):
            PTConfig(T=3.0, mu0=5.0, eps_stop=3.5)


class TestGrids:
    def test_spatial_grid(self):
        g = SpatialGrid(nx=11)
        assert g.dx == pytest.approx(0.1)
        assert g.xs[0] == 0.0 and g.xs[-1] == 1.0
        assert g.dx * (g.nx - 1) == pytest.approx(1.0, rel=1e-15)
        with pytest.raises(ValueError):
            SpatialGrid(nx=2)

    def test_tri_grid_addressability(self):
        g = TriGrid(n=5)
        assert g.in_domain(4, 4) and g.in_domain(3, 0)
        assert not g.in_domain(2, 3)
        m = g.mask()
        assert m[4, 2] and not m[2, 4]


class TestIntegrate1d:
    def test_constant(self):
        for nx in (2, 5, 50):
            xs = np.linspace(0, 1, nx)
            assert integrate_1d(np.ones(nx), xs[1] - xs[0]) == pytest.approx(1.0, rel=1e-14)

    def test_linear_exact(self):
        xs = np.linspace(0, 1, 11)
        assert integrate_1d(xs, 0.1) == pytest.approx(0.5, rel=1e-14)

    def test_quadratic_second_order(self):
        xs = np.linspace(0, 1, 101)
        err = abs(integrate_1d(xs ** 2, 0.01) - 1.0 / 3.0)
        assert err <= 2e-5

    def test_affine_exact_any_resolution(self):
        for nx in (3, 7, 23):
            xs = np.linspace(0, 1, nx)
            val = integrate_1d(3.0 * xs - 1.25, xs[1] - xs[0])
            assert val == pytest.approx(3.0 / 2.0 - 1.25, rel=1e-13)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            integrate_1d(np.array([1.0]), 0.1)


class TestLemma2:
    def test_reference_values(self):
        r = integrate_lemma2_check(1, xi=1.0, eta=1.0)
        assert r.first_closed == pytest.approx(0.5, rel=1e-14)
        r = integrate_lemma2_check(1, xi=1.0, eta=0.0)
        assert r.second_closed == 0.0
        r = integrate_lemma2_check(2, xi=1.0, eta=0.5)
        assert r.second_closed == pytest.approx(0.0208333, abs=1e-6)

    @pytest.mark.parametrize("n", range(1, 6))
    def test_quadrature_matches_closed_form(self, n):
        r = integrate_lemma2_check(n, xi=1.7, eta=1.0)
        assert abs(r.first_numeric - r.first_closed) <= 1e-6
        assert abs(r.second_numeric - r.second_closed) <= 1e-6

    def test_domain_violation(self):
        with pytest.raises(ValueError):
            integrate_lemma2_check(1, xi=0.5, eta=1.0)
