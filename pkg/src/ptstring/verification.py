"""Acceptance-criteria registry: one callable per criterion, shared by the
CLI `verify` subcommand and the pytest acceptance module.

Each check returns a CheckResult; nothing here asserts, so a failed
criterion is data, not an exception.  Heavy artifacts (kernel solves,
closed-loop runs) are cached on the context and reused across checks.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import bessel_i1, kernel_bound
from .config import ScenarioConfig
from .core import (SpatialGrid, StringParams, TriGrid, integrate_lemma2_check,
                   minimal_time, wave_speed)
from .diagnostics import default_weights, energy_eval, lyapunov_eval, poincare_check
from .gain import GainSchedule
from .kernel_fd import (KernelField, _fixed_point_slice, solve_kernel_fd,
                        volterra_relation_residual)
from .kernel_series import build_series_kernel, kernel_diagonal
from .scenarios import initial_condition
from .simulator import Trajectory, simulate
from .transforms import FieldSnapshot, forward_transform, inverse_transform

__all__ = ["CheckResult", "VerificationContext", "CRITERIA", "run_all"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


@dataclass
class VerificationContext:
    """Caches the expensive artifacts shared across criteria."""

    cfg: ScenarioConfig = field(default_factory=ScenarioConfig)
    _cache: dict = field(default_factory=dict)

    @property
    def params(self) -> StringParams:
        return self.cfg.string_params()

    @property
    def sched(self) -> GainSchedule:
        return GainSchedule.from_config(self.cfg.pt_config())

    def series(self, t_max: float):
        key = ("series", round(t_max, 9))
        if key not in self._cache:
            self._cache[key] = build_series_kernel(self.params, self.sched, t_max=t_max)
        return self._cache[key]

    def fd_field(self, n: int, dt_scale: float, t_end: float) -> KernelField:
        key = ("fd", n, round(dt_scale, 9), round(t_end, 9))
        if key not in self._cache:
            grid = TriGrid(n=n)
            c = wave_speed(self.params)
            dt = dt_scale * grid.dx / (c * np.sqrt(2.0))
            self._cache[key] = solve_kernel_fd(self.params, self.sched, grid, dt,
                                               t_end, oracle=self.series(t_end))
        return self._cache[key]

    def closed_run(self, ic_name: str) -> Trajectory:
        key = ("closed", ic_name)
        if key not in self._cache:
            cfg = self.cfg
            rep_cfg = ScenarioConfig(**{**cfg.__dict__, "scenario": "closed",
                                        "initial_condition": ic_name, "svg": False})
            from .scenarios import run_simulation
            self._cache[key] = run_simulation(rep_cfg, None)["trajectory"]
        return self._cache[key]

    def open_run(self) -> Trajectory:
        if "open" not in self._cache:
            grid = SpatialGrid(nx=self.cfg.nx)
            self._cache["open"] = simulate(
                "open", self.params, self.cfg.pt_config(), grid, t_end=self.cfg.T,
                p0=initial_condition("parabolic"), dt=self.cfg.plant_dt())
        return self._cache["open"]

    def target_run(self) -> Trajectory:
        if "target" not in self._cache:
            from .scenarios import run_simulation
            cfg = ScenarioConfig(**{**self.cfg.__dict__, "scenario": "target", "svg": False})
            self._cache["target"] = run_simulation(cfg, None)["trajectory"]
        return self._cache["target"]

    def baseline_run(self) -> Trajectory:
        if "baseline" not in self._cache:
            from .scenarios import run_simulation
            cfg = ScenarioConfig(**{**self.cfg.__dict__, "scenario": "baseline", "svg": False})
            self._cache["baseline"] = run_simulation(cfg, None)["trajectory"]
        return self._cache["baseline"]


def _timed(fn):
    def wrapper(ctx: VerificationContext) -> CheckResult:
        t0 = time.perf_counter()
        res = fn(ctx)
        res.runtime = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def criterion_1_minimal_time(ctx: VerificationContext) -> CheckResult:
    got = minimal_time(ctx.params)
    err = abs(got - 0.29814)
    return CheckResult("criterion-01 minimal time", err <= 1e-4, got,
                       f"T_min={got:.6f} vs 0.29814 (|err|={err:.2e} <= 1e-4)")


@_timed
def criterion_2_kernel_diagonal(ctx: VerificationContext) -> CheckResult:
    sched, params = ctx.sched, ctx.params
    series = ctx.series(0.9 * sched.T)
    xs = np.linspace(0.05, 1.0, 5)
    ts = np.linspace(0.0, 0.9 * sched.T, 4)
    worst = 0.0
    for t in ts:
        ref = kernel_diagonal(xs, float(t), params, sched)
        got = series.eval(xs, xs, float(t))
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))))
    field = ctx.fd_field(51, 0.5, 0.8 * sched.T)
    fd_worst = 0.0
    gx = field.grid.xs
    for m in range(0, field.times.size, max(1, field.times.size // 10)):
        ref = kernel_diagonal(gx, float(field.times[m]), params, sched)
        got = np.diagonal(field.values[:, :, m])
        fd_worst = max(fd_worst, float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))))
    ok = worst <= 1e-12 and fd_worst <= 1e-3
    return CheckResult("criterion-02 kernel diagonal", ok, worst,
                       f"series err {worst:.2e} <= 1e-12; FD err {fd_worst:.2e} <= 1e-3")


@_timed
def criterion_3_oracle_agreement(ctx: VerificationContext) -> CheckResult:
    from .scenarios import kernel_agreement
    sched = ctx.sched
    t_end = 0.8 * sched.T
    series = ctx.series(t_end)
    coarse = ctx.fd_field(51, 0.5, t_end)
    rep_c = kernel_agreement(coarse, series)
    fine = ctx.fd_field(101, 0.25, t_end)
    rep_f = kernel_agreement(fine, series)
    gain = rep_c["sup_rel_error"] / max(rep_f["sup_rel_error"], 1e-300)
    ok = rep_c["sup_rel_error"] <= 0.02 and gain >= 3.0
    return CheckResult("criterion-03 FD vs oracle", ok, rep_c["sup_rel_error"],
                       f"sup rel err {rep_c['sup_rel_error']:.2e} <= 2e-2; "
                       f"refinement gain {gain:.2f}x >= 3x")


@_timed
def criterion_4_theorem2_bound(ctx: VerificationContext) -> CheckResult:
    sched, params = ctx.sched, ctx.params
    series = ctx.series(0.9 * sched.T)
    xs = np.linspace(0.0, 1.0, 51)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = Y <= X
    violations = 0
    worst_ratio = 0.0
    for frac in (0.0, 0.3, 0.6, 0.9):
        t = frac * sched.T
        kv = np.abs(series.eval(X[mask], Y[mask], t))
        kb = kernel_bound(X[mask], Y[mask], t, params, sched)
        bad = kv > kb + 1e-13
        violations += int(np.sum(bad))
        pos = kb > 0
        if np.any(pos):
            worst_ratio = max(worst_ratio, float(np.max(kv[pos] / kb[pos])))
    return CheckResult("criterion-04 kernel bound", violations == 0, worst_ratio,
                       f"{violations} violations on 51x51 x 4 times; "
                       f"worst |k|/bound = {worst_ratio:.3e}")


@_timed
def criterion_5_bessel(ctx: VerificationContext) -> CheckResult:
    e1 = abs(bessel_i1(1.0) - 0.5651591)
    e2 = abs(bessel_i1(2.0) - 1.5906369)
    ok = e1 <= 1e-6 and e2 <= 1e-6
    return CheckResult("criterion-05 Bessel series", ok, max(e1, e2),
                       f"I1(1) err {e1:.2e}, I1(2) err {e2:.2e} (<= 1e-6)")


@_timed
def criterion_6_lemma2(ctx: VerificationContext) -> CheckResult:
    worst = 0.0
    for n in range(1, 6):
        r = integrate_lemma2_check(n, xi=1.7, eta=1.0)
        worst = max(worst, abs(r.first_numeric - r.first_closed),
                    abs(r.second_numeric - r.second_closed))
    return CheckResult("criterion-06 double-integral identities", worst <= 1e-6, worst,
                       f"max |quad - closed| = {worst:.2e} <= 1e-6 for n=1..5")


@_timed
def criterion_7_gain_derivatives(ctx: VerificationContext) -> CheckResult:
    sched = ctx.sched
    worst = 0.0
    for t in np.linspace(0.0, 0.8 * sched.T, 10):
        h = 1e-4 * (sched.T - t)
        ts = t + h * np.array([-2, -1, 0, 1, 2])
        f = np.array([sched.mu_any(float(s)) for s in ts])  # mu extends below 0
        d1 = (-f[4] + 8 * f[3] - 8 * f[1] + f[0]) / (12 * h)
        d2 = (-f[4] + 16 * f[3] - 30 * f[2] + 16 * f[1] - f[0]) / (12 * h ** 2)
        worst = max(worst,
                    abs(d1 - sched.mu_derivative(1, t)) / abs(d1),
                    abs(d2 - sched.mu_derivative(2, t)) / abs(d2))
    return CheckResult("criterion-07 gain derivatives", worst <= 1e-4, worst,
                       f"max rel err vs order-4 stencil = {worst:.2e} <= 1e-4")


@_timed
def criterion_8_open_loop_energy(ctx: VerificationContext) -> CheckResult:
    traj = ctx.open_run()
    params = ctx.params
    energies = [sum(energy_eval(s, v, params)) for s, v in
                zip(traj.snapshots, traj.snapshot_velocities)]
    E0 = energies[0]
    drift = float(np.max(np.abs(np.asarray(energies) - E0)) / E0)
    return CheckResult("criterion-08 open-loop conservation", drift <= 0.01, drift,
                       f"max energy drift {drift:.2e} <= 1e-2 over [0, {ctx.cfg.T}]")


def _late_envelope_monotone(times: np.ndarray, l2: np.ndarray, t_from: float,
                            slack: float = 1.05) -> bool:
    sel = times >= t_from
    ts, ys = times[sel], l2[sel]
    chunks = np.array_split(ys, 6)
    peaks = [float(np.max(c)) for c in chunks if c.size]
    return all(peaks[i + 1] <= slack * peaks[i] for i in range(len(peaks) - 1))


@_timed
def criterion_9_closed_loop_decay(ctx: VerificationContext) -> CheckResult:
    traj = ctx.closed_run("parabolic")
    ratio = float(traj.l2[-1] / traj.l2[0])
    mono = _late_envelope_monotone(traj.times, traj.l2, 2.0)
    ok = ratio <= 0.05 and mono
    return CheckResult(
        "criterion-09 prescribed-time decay", ok, ratio,
        f"||p(T-0.05)||/||p0|| = {ratio:.3f} (gate 0.05); late envelope "
        f"monotone: {mono}")


@_timed
def criterion_10_initial_condition_sweep(ctx: VerificationContext) -> CheckResult:
    ratios = {}
    for ic in ("parabolic", "half_sine", "bump"):
        traj = ctx.closed_run(ic)
        ratios[ic] = float(traj.l2[-1] / traj.l2[0])
    ok = all(r <= 0.05 for r in ratios.values())
    detail = ", ".join(f"{k}: {v:.3f}" for k, v in ratios.items())
    return CheckResult("criterion-10 initial-condition sweep", ok,
                       max(ratios.values()), f"final/initial ratios (gate 0.05): {detail}")


@_timed
def criterion_11_transform_round_trip(ctx: VerificationContext) -> CheckResult:
    params, sched = ctx.params, ctx.sched
    grid = SpatialGrid(nx=ctx.cfg.nx)
    series = ctx.series(0.8 * sched.T)
    p0 = FieldSnapshot(grid=grid, values=initial_condition("parabolic")(grid.xs), time=0.0)
    K = series.kernel_matrix(grid.xs, 0.0)
    R, _ = _fixed_point_slice(K, grid.dx, tol=1e-10, max_iter=400)
    res = volterra_relation_residual(K, R, grid.dx)

    class _Mat:
        def __init__(self, m):
            self.m = m

        def kernel_matrix(self, xs, t):
            return self.m

    v = forward_transform(p0, _Mat(K))
    back = inverse_transform(v, _Mat(R))
    err = float(np.max(np.abs(np.asarray(back.values) - np.asarray(p0.values))))
    ok = err <= 1e-3 and res <= 1e-8
    return CheckResult("criterion-11 transform round trip", ok, err,
                       f"round-trip sup err {err:.2e} <= 1e-3; reciprocity "
                       f"residual {res:.2e} <= 1e-8")


@_timed
def criterion_12_inequalities(ctx: VerificationContext) -> CheckResult:
    params = ctx.params
    weights = default_weights(params)
    violations = 0
    checked = 0
    for traj in (ctx.open_run(), ctx.closed_run("parabolic"), ctx.target_run(),
                 ctx.baseline_run()):
        dx = traj.snapshots[0].grid.dx
        for snap, vel in zip(traj.snapshots, traj.snapshot_velocities):
            lhs, rhs = poincare_check(snap)
            if lhs > rhs * (1 + 1e-9) + 1e-15:
                violations += 1
            v_x = np.gradient(np.asarray(snap.values), dx, edge_order=2)
            ly = lyapunov_eval(np.asarray(snap.values), np.asarray(vel), v_x,
                               dx, weights, params)
            tol = 1e-9 * max(ly.V1, 1e-30)
            if not (ly.sigma2 * ly.V1 >= -tol
                    and ly.sigma2 * ly.V1 <= ly.V + tol
                    and ly.V <= ly.sigma3 * ly.V1 + tol):
                violations += 1
            checked += 1
    return CheckResult("criterion-12 functional inequalities", violations == 0,
                       float(violations),
                       f"{violations} violations over {checked} snapshots "
                       f"(pinned-end norm bound and V bracketing)")


@_timed
def criterion_13_bounded_control(ctx: VerificationContext) -> CheckResult:
    traj = ctx.closed_run("parabolic")
    finite = bool(np.all(np.isfinite(traj.u)))
    max_u = float(np.max(np.abs(traj.u)))
    end_ratio = float(abs(traj.u[-1]) / max_u) if max_u > 0 else 0.0
    ok = finite and end_ratio <= 0.10
    return CheckResult("criterion-13 bounded control", ok, end_ratio,
                       f"max|u| = {max_u:.2f} (finite: {finite}); "
                       f"|u(T-0.05)|/max|u| = {end_ratio:.3f} <= 0.10")


CRITERIA = [
    criterion_1_minimal_time,
    criterion_2_kernel_diagonal,
    criterion_3_oracle_agreement,
    criterion_4_theorem2_bound,
    criterion_5_bessel,
    criterion_6_lemma2,
    criterion_7_gain_derivatives,
    criterion_8_open_loop_energy,
    criterion_9_closed_loop_decay,
    criterion_10_initial_condition_sweep,
    criterion_11_transform_round_trip,
    criterion_12_inequalities,
    criterion_13_bounded_control,
]


def run_all(cfg: ScenarioConfig | None = None, echo: bool = True) -> list[CheckResult]:
    ctx = VerificationContext(cfg=cfg or ScenarioConfig())
    results = []
    for fn in CRITERIA:
        try:
            res = fn(ctx)
        except Exception as exc:  # a crashed check is a failed check
            res = CheckResult(fn.__name__, False, float("nan"), f"raised {exc!r}")
        results.append(res)
        if echo:
            print(res.line())
    return results
