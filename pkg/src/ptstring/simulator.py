"""Explicit finite-difference simulation of the string plant and the target.

Plant:   rho0 p_tt = Tf p_xx,  p(0)=0,  Tf p_x(1) + M p_tt(1) = u(t).
Target:  rho0 v_tt = Tf v_xx - mu(t) v,  v(0)=0,  Tf v_x(1) = -M v_tt(1).

Both use the standard three-level interior stencil; the tip advances by
its own three-level mass law with a second-order one-sided slope.  Closed
loop, the control gains come from kernel boundary traces; past a
configurable freeze time the loop hands off to a self-consistent
constant-gain kernel (the time-varying kernel blows up along the
characteristic cone of the terminal time, at x = 1 first at
T - 1/c, so its traces cannot be supplied all the way to T - eps_stop).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .controller import boundary_slope, pt_control
from .core import (PTConfig, SpatialGrid, StringParams, check_prescribed_time,
                   trapezoid_weights, wave_speed)
from .gain import GainSchedule
from .kernel_fd import BoundaryTraces, CFLError, boundary_traces
from .kernel_series import SeriesKernel, build_series_kernel
from .transforms import FieldSnapshot

__all__ = [
    "WaveState",
    "Trajectory",
    "SimulationUnstableError",
    "init_state",
    "step",
    "simulate",
    "default_freeze_time",
    "TraceProvider",
]

Scenario = Literal["open", "closed", "target", "baseline"]


class SimulationUnstableError(RuntimeError):
    """Raised when the discrete state stops being finite."""

    def __init__(self, t: float):
        super().__init__(f"simulation became non-finite at t={t:.6f}")
        self.t = t


@dataclass
class WaveState:
    """Two consecutive displacement levels of the explicit scheme."""

    grid: SpatialGrid
    p_prev: np.ndarray
    p_curr: np.ndarray
    t: float
    dt: float

    def snapshot(self) -> FieldSnapshot:
        return FieldSnapshot(grid=self.grid, values=self.p_curr.copy(), time=self.t)

    def velocity(self) -> np.ndarray:
        """Backward-difference velocity estimate at the current level."""
        return (self.p_curr - self.p_prev) / self.dt


def _check_cfl(grid: SpatialGrid, dt: float, params: StringParams) -> None:
    c = wave_speed(params)
    if dt > grid.dx / c + 1e-14:
        raise CFLError(f"dt={dt:.3e} violates the plant bound dx/c={grid.dx / c:.3e}")


def init_state(grid: SpatialGrid, p0: Callable, v0: Callable, dt: float,
               params: StringParams, mu_at_0: float = 0.0,
               u0: float = 0.0) -> WaveState:
    """Sample initial data and build the back level by a Taylor start.

    Interior: p_prev = p0 - dt v0 + dt^2/2 (Tf/rho0 p0'' - mu(0)/rho0 p0);
    mu_at_0 is nonzero only for target-system runs.  The tip node uses its
    own mass law (u(0) - Tf p0_x(1))/M instead of the interior acceleration.
    """
    _check_cfl(grid, dt, params)
    xs = grid.xs
    pc = np.asarray(p0(xs), dtype=float)
    vc = np.asarray(v0(xs), dtype=float)
    if abs(pc[0]) > 1e-12 or abs(vc[0]) > 1e-12:
        raise ValueError("initial data must vanish at x=0")
    pxx = np.gradient(np.gradient(pc, grid.dx, edge_order=2), grid.dx, edge_order=2)
    acc = params.Tf / params.rho0 * pxx - mu_at_0 / params.rho0 * pc
    if params.M > 0:
        acc[-1] = (u0 - params.Tf * boundary_slope(pc, grid.dx)) / params.M
    p_prev = pc - dt * vc + 0.5 * dt ** 2 * acc
    return WaveState(grid=grid, p_prev=p_prev, p_curr=pc.copy(), t=0.0, dt=dt)


def step(state: WaveState, u: float, params: StringParams,
         mu_now: float = 0.0) -> WaveState:
    """Advance one time level.

    Interior: three-level explicit stencil (with an optional -mu p reaction
    term for target runs).  x=0 pinned.  Tip: M p_tt(1) = u - Tf p_x(1)
    with a one-sided slope; for M = 0 the condition Tf p_x(1) = u is imposed
    directly on the new level.
    """
    g = state.grid
    dx = g.dx
    dt = state.dt
    c2 = params.Tf / params.rho0
    r2 = c2 * dt ** 2 / dx ** 2
    pc, pm = state.p_curr, state.p_prev

    pn = np.empty_like(pc)
    pn[1:-1] = (2 * pc[1:-1] - pm[1:-1] + r2 * (pc[2:] - 2 * pc[1:-1] + pc[:-2])
                - dt ** 2 * mu_now / params.rho0 * pc[1:-1])
    pn[0] = 0.0
    if params.M > 0:
        # lumped tip: the distributed reaction term does not act on it
        px1 = boundary_slope(pc, dx)
        pn[-1] = 2 * pc[-1] - pm[-1] + dt ** 2 / params.M * (u - params.Tf * px1)
    else:
        # massless tip: slope condition Tf p_x(1) = u on the new level
        pn[-1] = (4 * pn[-2] - pn[-3] + 2 * dx * u / params.Tf) / 3.0
    if not np.all(np.isfinite(pn)):
        raise SimulationUnstableError(state.t + dt)
    return WaveState(grid=g, p_prev=pc, p_curr=pn, t=state.t + dt, dt=dt)


def default_freeze_time(params: StringParams, cfg: PTConfig) -> float:
    """Default controller-gain freeze time for closed-loop runs.

    The time-varying kernel develops a genuine singularity along
    c (T - t) = sqrt(x^2 - y^2); its x = 1 traces are last available just
    before T - 1/c.  Empirically the loop must hand off earlier still (the
    growing gain amplifies the transform's unmodelled kernel-rate coupling),
    so the default freeze sits at T - 2.7/c, clamped inside the run window.
    """
    c = wave_speed(params)
    return min(cfg.T - cfg.eps_stop, max(0.5 * cfg.T, cfg.T - 2.7 / c))


class TraceProvider:
    """Boundary-trace source for closed-loop runs.

    Wraps either a SeriesKernel (exact rows) or a KernelField (interpolated
    rows).  Past freeze_time the provider hands off to a self-consistent
    constant-gain kernel built at mu(freeze_time): holding the time-varying
    kernel's instantaneous rows fixed is not a valid control law (its rows
    embed the kernel-rate history) and destabilizes the loop, while the
    constant-gain kernel at the same gain level is a genuine backstepping
    law, so the post-freeze loop is neutrally stable.
    """

    def __init__(self, source, params: StringParams, sched: GainSchedule,
                 ys: np.ndarray, freeze_time: float | None = None):
        self.source = source
        self.params = params
        self.sched = sched
        self.ys = np.asarray(ys, dtype=float)
        self.freeze_time = np.inf if freeze_time is None else float(freeze_time)
        self._frozen_traces: BoundaryTraces | None = None

    def _raw(self, t: float) -> BoundaryTraces:
        if isinstance(self.source, SeriesKernel):
            k11, kx, ky11, kyy = self.source.traces(t, self.ys)
            return BoundaryTraces(k11=k11, kx_row=kx, ky11=ky11, kyy_row=kyy)
        tr = boundary_traces(self.source, t, clamp=True)
        gy = self.source.grid.xs
        if gy.size == self.ys.size and np.allclose(gy, self.ys):
            return tr
        return BoundaryTraces(k11=tr.k11,
                              kx_row=np.interp(self.ys, gy, tr.kx_row),
                              ky11=tr.ky11,
                              kyy_row=np.interp(self.ys, gy, tr.kyy_row))

    def _frozen(self) -> BoundaryTraces:
        if self._frozen_traces is None:
            tf = self.freeze_time
            mu_bar = self.sched.mu_any(tf)
            frozen_sched = GainSchedule(mu0=float(np.sqrt(mu_bar)), T=self.sched.T)
            frozen = build_series_kernel(self.params, frozen_sched, t_max=tf, frozen=True)
            k11, kx, ky11, kyy = frozen.traces(tf, self.ys)
            self._frozen_traces = BoundaryTraces(k11=k11, kx_row=kx, ky11=ky11, kyy_row=kyy)
        return self._frozen_traces

    def traces_at(self, t: float) -> BoundaryTraces:
        if t >= self.freeze_time:
            return self._frozen()
        return self._raw(t)


@dataclass
class Trajectory:
    """Recorded run: snapshots at a stride plus per-step scalar series.

    ek/ep use the backward-difference velocity (first order, slight ripple);
    snapshot_velocities are centered and second order.
    """

    scenario: str
    times: np.ndarray
    l2: np.ndarray
    u: np.ndarray
    ek: np.ndarray
    ep: np.ndarray
    snapshots: list
    snapshot_velocities: list
    final_state: WaveState

    def l2_initial(self) -> float:
        return float(self.l2[0])


def simulate(scenario: Scenario, params: StringParams, cfg: PTConfig,
             grid: SpatialGrid, t_end: float,
             p0: Callable, v0: Callable | None = None,
             dt: float | None = None,
             trace_provider: TraceProvider | None = None,
             freeze_time: float | None = None,
             snapshot_stride: int = 20) -> Trajectory:
    """Run one scenario and record norms, control, and strided snapshots.

    closed/baseline scenarios build a TraceProvider on demand (series-exact
    rows); target integrates the reaction term with its own tip law and no
    forcing; open applies u = 0.
    """
    sched = GainSchedule.from_config(cfg)
    if scenario in ("closed", "target"):
        check_prescribed_time(params, cfg)
        if t_end > cfg.T - cfg.eps_stop + 1e-12:
            raise ValueError(
                f"t_end={t_end} exceeds the cutoff T - eps_stop = {cfg.T - cfg.eps_stop}")
    v0 = v0 or (lambda xs: np.zeros_like(xs))
    if dt is None:
        dt = 0.9 * grid.dx / wave_speed(params)

    if scenario in ("closed", "baseline") and trace_provider is None:
        if scenario == "closed":
            if freeze_time is None:
                freeze_time = default_freeze_time(params, cfg)
            series = build_series_kernel(params, sched, t_max=min(freeze_time, t_end))
            trace_provider = TraceProvider(series, params, sched, grid.xs,
                                           freeze_time=freeze_time)
        else:
            frozen = build_series_kernel(params, sched, t_max=t_end, frozen=True)
            trace_provider = TraceProvider(frozen, params, sched, grid.xs,
                                           freeze_time=None)

    u0 = 0.0
    if scenario in ("closed", "baseline"):
        p0_arr = np.asarray(p0(grid.xs), dtype=float)
        snap0 = FieldSnapshot(grid=grid, values=p0_arr, time=0.0)
        u0 = pt_control(snap0, boundary_slope(p0_arr, grid.dx),
                        trace_provider.traces_at(0.0), params).u

    mu0_at = sched.mu(0.0) if scenario == "target" else 0.0
    state = init_state(grid, p0, v0, dt, params, mu_at_0=mu0_at, u0=u0)

    w = trapezoid_weights(grid.nx, grid.dx)

    def energies(values: np.ndarray, vel: np.ndarray) -> tuple[float, float]:
        px = np.gradient(values, grid.dx, edge_order=2)
        ek = 0.5 * params.M * vel[-1] ** 2 + 0.5 * params.rho0 * float(np.dot(w, vel ** 2))
        return ek, 0.5 * params.Tf * float(np.dot(w, px ** 2))

    n_steps = int(round(t_end / dt))
    times = np.empty(n_steps + 1)
    l2 = np.empty(n_steps + 1)
    u_series = np.zeros(n_steps + 1)
    ek_series = np.empty(n_steps + 1)
    ep_series = np.empty(n_steps + 1)
    times[0] = 0.0
    l2[0] = float(np.sqrt(np.dot(w, state.p_curr ** 2)))
    v0_arr = np.asarray(v0(grid.xs), dtype=float)
    ek_series[0], ep_series[0] = energies(state.p_curr, v0_arr)
    snapshots: list[FieldSnapshot] = [state.snapshot()]
    snapshot_velocities: list[np.ndarray] = [v0_arr]

    for s_i in range(n_steps):
        if scenario in ("closed", "baseline"):
            tr = trace_provider.traces_at(state.t)
            px1 = boundary_slope(state.p_curr, grid.dx)
            u = pt_control(state.snapshot(), px1, tr, params).u
        else:
            u = 0.0
        mu_now = sched.mu_any(state.t) if scenario == "target" else 0.0
        level_nm1 = state.p_prev
        state = step(state, u, params, mu_now=mu_now)
        times[s_i + 1] = state.t
        l2[s_i + 1] = float(np.sqrt(np.dot(w, state.p_curr ** 2)))
        u_series[s_i] = u
        ek_series[s_i + 1], ep_series[s_i + 1] = energies(state.p_curr, state.velocity())
        if (s_i + 1) % snapshot_stride == 0 or s_i == n_steps - 1:
            # record level n (now state.p_prev) with its centered velocity
            snapshots.append(FieldSnapshot(grid=grid, values=state.p_prev.copy(),
                                           time=state.t - dt))
            snapshot_velocities.append((state.p_curr - level_nm1) / (2 * dt))
    u_series[n_steps] = u_series[n_steps - 1] if n_steps else 0.0

    return Trajectory(scenario=scenario, times=times, l2=l2, u=u_series,
                      ek=ek_series, ep=ep_series,
                      snapshots=snapshots, snapshot_velocities=snapshot_velocities,
                      final_state=state)
