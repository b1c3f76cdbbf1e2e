import numpy as np
import pytest

from ptstring.controller import boundary_slope, exp_baseline_control, pt_control
from ptstring.core import SpatialGrid, StringParams, trapezoid_weights
from ptstring.gain import GainSchedule
from ptstring.kernel_fd import BoundaryTraces, boundary_traces, solve_kernel_fd
from ptstring.core import TriGrid, wave_speed
from ptstring.kernel_series import build_series_kernel
from ptstring.transforms import FieldSnapshot

PARAMS = StringParams(rho0=1.0, Tf=45.0, M=1.0)
SCHED = GainSchedule(mu0=5.0, T=3.0)


@pytest.fixture(scope="module")
def series():
    return build_series_kernel(PARAMS, SCHED, t_max=2.0)


def series_traces(series, t, ys):
    k11, kx, ky11, kyy = series.traces(t, ys)
    return BoundaryTraces(k11=k11, kx_row=kx, ky11=ky11, kyy_row=kyy)


def parabolic(xs):
    return -0.5 * xs * (xs - 1.0)


class TestPtControl:
    def test_zero_state_zero_output(self, series):
        grid = SpatialGrid(nx=51)
        tr = series_traces(series, 0.7, grid.xs)
        p = FieldSnapshot(grid=grid, values=np.zeros(grid.nx), time=0.7)
        assert pt_control(p, 0.0, tr, PARAMS).u == 0.0

    def test_linearity(self, series):
        grid = SpatialGrid(nx=51)
        tr = series_traces(series, 0.2, grid.xs)
        p = FieldSnapshot(grid=grid, values=parabolic(grid.xs), time=0.2)
        px1 = boundary_slope(p.values, grid.dx)
        u1 = pt_control(p, px1, tr, PARAMS).u
        p3 = FieldSnapshot(grid=grid, values=3.0 * np.asarray(p.values), time=0.2)
        u3 = pt_control(p3, 3.0 * px1, tr, PARAMS).u
        assert u3 == pytest.approx(3.0 * u1, rel=1e-12)

    def test_massless_drops_tip_group(self, series):
        light = StringParams(rho0=1.0, Tf=45.0, M=0.0)
        grid = SpatialGrid(nx=51)
        tr = series_traces(series, 0.2, grid.xs)
        p = FieldSnapshot(grid=grid, values=parabolic(grid.xs), time=0.2)
        w = trapezoid_weights(grid.nx, grid.dx)
        expected = (PARAMS.Tf * tr.k11 * p.values[-1]
                    + PARAMS.Tf * float(np.dot(w, tr.kx_row * p.values)))
        assert pt_control(p, 1.23, tr, light).u == pytest.approx(expected, rel=1e-12)

    def test_u0_fd_pipeline_matches_fine_series_quadrature(self, series):
        # u(0) with p0 = -x(x-1)/2, p0'(1) = -1/2: high-resolution series
        # quadrature is the reference; the FD-field pipeline at n=51 must
        # land within 1%
        fine = SpatialGrid(nx=2001)
        p_fine = FieldSnapshot(grid=fine, values=parabolic(fine.xs), time=0.0)
        u_ref = pt_control(p_fine, -0.5, series_traces(series, 0.0, fine.xs), PARAMS).u

        grid = TriGrid(n=51)
        dt = 0.5 * grid.dx / (wave_speed(PARAMS) * np.sqrt(2.0))
        field = solve_kernel_fd(PARAMS, SCHED, grid, dt, 0.2, oracle=series)
        coarse = SpatialGrid(nx=51)
        p_c = FieldSnapshot(grid=coarse, values=parabolic(coarse.xs), time=0.0)
        u_fd = pt_control(p_c, -0.5, boundary_traces(field, 0.0), PARAMS).u
        assert u_fd == pytest.approx(u_ref, rel=0.01)

    def test_shape_mismatch_rejected(self, series):
        grid = SpatialGrid(nx=51)
        tr = series_traces(series, 0.0, np.linspace(0, 1, 11))
        p = FieldSnapshot(grid=grid, values=np.zeros(grid.nx), time=0.0)
        with pytest.raises(ValueError):
            pt_control(p, 0.0, tr, PARAMS)


class TestBaseline:
    def test_zero_state(self):
        frozen = build_series_kernel(PARAMS, SCHED, t_max=2.0, frozen=True)
        grid = SpatialGrid(nx=51)
        tr = series_traces(frozen, 1.0, grid.xs)
        p = FieldSnapshot(grid=grid, values=np.zeros(grid.nx), time=1.0)
        assert exp_baseline_control(p, 0.0, tr, PARAMS).u == 0.0

    def test_matches_pt_law_at_time_zero(self, series):
        # schedules agree at t=0 (mu(0) = mu0^2); the kernels themselves
        # coincide only through the first iterate (the time-varying one
        # carries rate-history brackets of relative size 6 rho0/(mu0 T)^2
        # from the second iterate on), so the two laws agree closely but
        # not exactly there
        frozen = build_series_kernel(PARAMS, SCHED, t_max=2.0, frozen=True)
        grid = SpatialGrid(nx=101)
        p = FieldSnapshot(grid=grid, values=parabolic(grid.xs), time=0.0)
        px1 = boundary_slope(p.values, grid.dx)
        u_pt = pt_control(p, px1, series_traces(series, 0.0, grid.xs), PARAMS).u
        u_base = exp_baseline_control(p, px1, series_traces(frozen, 0.0, grid.xs), PARAMS).u
        assert u_base == pytest.approx(u_pt, rel=5e-3)
        assert u_base != u_pt

    def test_baseline_traces_stay_bounded(self, series):
        frozen = build_series_kernel(PARAMS, SCHED, t_max=2.0, frozen=True)
        ys = np.linspace(0, 1, 21)
        base_early = series_traces(frozen, 0.0, ys)
        base_late = series_traces(frozen, 1.9, ys)
        pt_late = series_traces(series, 1.9, ys)
        assert np.allclose(base_late.kx_row, base_early.kx_row)
        assert np.max(np.abs(pt_late.kx_row)) > 5 * np.max(np.abs(base_late.kx_row))


def test_boundary_slope_second_order():
    xs = np.linspace(0.0, 1.0, 201)
    vals = np.sin(1.3 * xs)
    got = boundary_slope(vals, xs[1] - xs[0])
    assert got == pytest.approx(1.3 * np.cos(1.3), abs=1e-5)
