"""Scenario runners shared by the CLI and the verification suite."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .bounds import calibrate_Ck
from .config import ScenarioConfig
from .core import TriGrid, trapezoid_weights
from .diagnostics import (default_weights, energy_eval, lyapunov_eval,
                          theorem4_envelope)
from .gain import GainSchedule
from .kernel_fd import (solve_inverse_kernel, solve_kernel_fd,
                        volterra_relation_residual)
from .kernel_series import build_series_kernel
from .simulator import TraceProvider, Trajectory, default_freeze_time, simulate
from .transforms import FieldSnapshot, forward_transform, _lower_quadrature

__all__ = [
    "initial_condition",
    "INITIAL_CONDITIONS",
    "run_kernel",
    "run_simulation",
    "run_compare",
    "kernel_agreement",
]

INITIAL_CONDITIONS = {
    "parabolic": lambda xs: -0.5 * xs * (xs - 1.0),
    "half_sine": lambda xs: 0.1 * np.sin(np.pi * xs / 2.0),
    "bump": lambda xs: xs ** 2 * (1.0 - xs),
    "ramp": lambda xs: 0.1 * xs,
}


def initial_condition(name: str):
    try:
        return INITIAL_CONDITIONS[name]
    except KeyError:
        raise ValueError(f"unknown initial condition {name!r}") from None


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def kernel_agreement(field, series, t_values=None) -> dict:
    """Slice-normalized sup relative error of the FD field vs the series."""
    grid = field.grid
    xs = grid.xs
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = np.tril(np.ones((grid.n, grid.n), dtype=bool))
    if t_values is None:
        stride = max(1, field.times.size // 60)
        t_values = field.times[::stride]
    worst = 0.0
    per_slice = []
    for t in t_values:
        ref = np.zeros((grid.n, grid.n))
        ref[mask] = series.eval(X[mask], Y[mask], float(t))
        got = np.nan_to_num(field.slice_at(float(t)))
        scale = float(np.max(np.abs(ref)))
        err = float(np.max(np.abs(got - ref))) / max(scale, 1e-300)
        per_slice.append((float(t), err))
        worst = max(worst, err)
    return {"sup_rel_error": worst, "per_slice": per_slice}


def run_kernel(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> dict:
    """Solve the FD kernel and its inverse, compare against the series,
    export fields, and return the agreement report."""
    cfg.validate()
    params = cfg.string_params()
    sched = GainSchedule.from_config(cfg.pt_config())
    grid = TriGrid(n=cfg.kernel_n)
    t_end = min(cfg.run_t_end(), 0.8 * cfg.T)
    series = build_series_kernel(params, sched, t_max=t_end)
    field = solve_kernel_fd(params, sched, grid, cfg.kernel_dt(), t_end, oracle=series)
    report = kernel_agreement(field, series)

    stride = max(1, field.times.size // 24)
    inv_times = field.times[::stride]
    inverse = solve_inverse_kernel(field, slice_times=inv_times)
    res = max(
        volterra_relation_residual(field.slice_at(float(t)), inverse.slice_at(float(t)), grid.dx)
        for t in inv_times
    )
    report["inverse_fixed_point_residual"] = res
    report["t_end"] = t_end
    report["n"] = cfg.kernel_n

    if out_dir is not None:
        out = Path(out_dir)
        xs = grid.xs
        k_rows, r_rows = [], []
        kstride = max(1, field.times.size // 40)
        for m in range(0, field.times.size, kstride):
            t = float(field.times[m])
            for i in range(grid.n):
                for j in range(i + 1):
                    k_rows.append((t, xs[i], xs[j], float(field.values[i, j, m])))
        for m, t in enumerate(inv_times):
            for i in range(grid.n):
                for j in range(i + 1):
                    r_rows.append((float(t), xs[i], xs[j], float(inverse.values[i, j, m])))
        _write_csv(out / "kernel.csv", ["t", "x", "y", "k"], k_rows)
        _write_csv(out / "inverse_kernel.csv", ["t", "x", "y", "r"], r_rows)
        _write_csv(out / "kernel_agreement.csv", ["t", "rel_error"], report["per_slice"])
        series.export_terms(out / "kernel_terms.txt")
    return report


def _diagnostics_rows(traj: Trajectory, cfg: ScenarioConfig, series) -> list:
    """Per-snapshot norm/energy/Lyapunov rows for export."""
    params = cfg.string_params()
    sched = GainSchedule.from_config(cfg.pt_config())
    weights = default_weights(params)
    bp = calibrate_Ck(params, sched)
    w = trapezoid_weights(cfg.nx, traj.snapshots[0].grid.dx)
    rows = []
    eps_run = 0.0
    dx = traj.snapshots[0].grid.dx
    for snap, vel in zip(traj.snapshots, traj.snapshot_velocities):
        t = snap.time
        Ek, Ep = energy_eval(snap, vel, params)
        if traj.scenario == "closed" and series is not None:
            v = forward_transform(snap, series, t=min(t, series.t_max))
            v_vals = np.asarray(v.values)
        else:
            # open loop: v is p; target runs already evolve the target field
            v_vals = np.asarray(snap.values)
        v_x = np.gradient(v_vals, dx, edge_order=2)
        v_t = np.asarray(vel)  # proxy: plant velocity (exact for open loop)
        ly = lyapunov_eval(v_vals, v_t, v_x, dx, weights, params)
        delta3 = max(weights.alpha * params.Tf, weights.alpha * params.rho0,
                     weights.beta * params.Tf)
        eps_run = max(eps_run, 0.5 * delta3 * (v_x[-1] + v_t[-1]) ** 2)
        if t < cfg.T:
            env = theorem4_envelope(t, V0=rows[0][5] if rows else ly.V, weights=weights,
                                    sched=sched, params=params, bound_params=bp,
                                    eps=eps_run)
        else:
            env = np.inf
        l2v = float(np.sqrt(np.dot(w, v_vals ** 2)))
        rows.append((t, snap.l2_norm(), l2v, ly.V1, ly.V2, ly.V, env, Ek, Ep))
    return rows


def run_simulation(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> dict:
    """Run the configured scenario; export trajectory, norms, diagnostics."""
    cfg.validate()
    params = cfg.string_params()
    pt = cfg.pt_config()
    sched = GainSchedule.from_config(pt)
    grid = cfg.grid()
    t_end = cfg.run_t_end()
    p0 = initial_condition(cfg.initial_condition)

    provider = None
    series = None
    if cfg.scenario in ("closed", "baseline"):
        freeze = cfg.gain_freeze_time
        if cfg.scenario == "closed" and freeze is None:
            freeze = default_freeze_time(params, pt)
        if cfg.scenario == "closed":
            series = build_series_kernel(params, sched, t_max=min(freeze, t_end))
            if cfg.trace_source == "fd":
                kgrid = TriGrid(n=cfg.kernel_n)
                field = solve_kernel_fd(params, sched, kgrid, cfg.kernel_dt(),
                                        min(freeze, t_end), oracle=series)
                provider = TraceProvider(field, params, sched, grid.xs, freeze_time=freeze)
            else:
                provider = TraceProvider(series, params, sched, grid.xs, freeze_time=freeze)
        else:
            frozen = build_series_kernel(params, sched, t_max=t_end, frozen=True)
            provider = TraceProvider(frozen, params, sched, grid.xs, freeze_time=None)
    v0_fn = None
    if cfg.scenario == "target":
        # integrate the target field from the induced initial data
        series = build_series_kernel(params, sched, t_max=min(0.8 * cfg.T, t_end))
        xs = grid.xs
        p0_arr = np.asarray(p0(xs), dtype=float)
        snap0 = FieldSnapshot(grid=grid, values=p0_arr, time=0.0)
        v_init = np.asarray(forward_transform(snap0, series).values)
        Kt0 = series.kernel_t_matrix(xs, 0.0)
        vt_init = -_lower_quadrature(Kt0, p0_arr, grid.dx)
        vt_init[0] = 0.0
        p0 = lambda _xs: v_init
        v0_fn = lambda _xs: vt_init

    traj = simulate(cfg.scenario if cfg.scenario != "sweep" else "closed",
                    params, pt, grid, t_end, p0, v0=v0_fn,
                    dt=cfg.plant_dt(), trace_provider=provider,
                    freeze_time=cfg.gain_freeze_time)

    report = {
        "scenario": cfg.scenario,
        "t_end": t_end,
        "l2_initial": traj.l2_initial(),
        "l2_final": float(traj.l2[-1]),
        "l2_ratio": float(traj.l2[-1] / traj.l2[0]),
        "max_abs_u": float(np.max(np.abs(traj.u))),
    }
    if out_dir is not None:
        out = Path(out_dir)
        _write_csv(out / "norms.csv", ["t", "l2", "Ek", "Ep", "u"],
                   zip(traj.times.tolist(), traj.l2.tolist(), traj.ek.tolist(),
                       traj.ep.tolist(), traj.u.tolist()))
        if cfg.scenario in ("closed", "baseline"):
            _write_csv(out / "control.csv", ["t", "u"],
                       zip(traj.times.tolist(), traj.u.tolist()))
        rows = []
        for snap in traj.snapshots:
            for x, p in zip(snap.grid.xs, snap.values):
                rows.append((snap.time, float(x), float(p)))
        _write_csv(out / "trajectory.csv", ["t", "x", "p"], rows)
        diag = _diagnostics_rows(traj, cfg, series)
        _write_csv(out / "diagnostics.csv",
                   ["t", "l2_p", "l2_v", "V1", "V2", "V", "envelope", "Ek", "Ep"], diag)
        if cfg.svg:
            _render_norms_svg(out / "norms.svg", [(cfg.scenario, traj.times, traj.l2)])
    report["trajectory"] = traj
    return report


def run_compare(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> dict:
    """Closed loop vs frozen-gain baseline, plus an initial-condition sweep."""
    cfg.validate()
    results = {}
    curves = []
    for scenario in ("closed", "baseline"):
        c2 = ScenarioConfig(**{**cfg.__dict__, "scenario": scenario, "svg": False})
        rep = run_simulation(c2, None)
        traj = rep.pop("trajectory")
        results[scenario] = rep
        curves.append((scenario, traj.times, traj.l2))
        if out_dir is not None:
            _write_csv(Path(out_dir) / f"norms_{scenario}.csv", ["t", "l2", "u"],
                       zip(traj.times.tolist(), traj.l2.tolist(), traj.u.tolist()))

    sweep = {}
    for ic in ("parabolic", "half_sine", "bump"):
        c2 = ScenarioConfig(**{**cfg.__dict__, "scenario": "closed",
                               "initial_condition": ic, "svg": False})
        rep = run_simulation(c2, None)
        traj = rep.pop("trajectory")
        sweep[ic] = rep
        curves.append((f"closed/{ic}", traj.times, traj.l2))
        if out_dir is not None:
            _write_csv(Path(out_dir) / f"norms_sweep_{ic}.csv", ["t", "l2"],
                       zip(traj.times.tolist(), traj.l2.tolist()))
    results["sweep"] = sweep
    if out_dir is not None and cfg.svg:
        _render_norms_svg(Path(out_dir) / "comparison.svg", curves, log=True)
    return results


def _render_norms_svg(path: Path, curves, log: bool = False) -> None:
    try:
        import matplotlib
        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, ts, ys in curves:
        ax.plot(ts, ys, label=label)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("L2 norm")
    ax.legend()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
