"""Volterra transform between plant and target states, and its inverse."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SpatialGrid, StringParams, trapezoid_weights
from .gain import GainSchedule

__all__ = [
    "FieldSnapshot",
    "forward_transform",
    "inverse_transform",
    "target_residual",
]


@dataclass(frozen=True)
class FieldSnapshot:
    """One spatial field at one instant; the x = 0 value must vanish."""

    grid: SpatialGrid
    values: np.ndarray
    time: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nx,):
            raise ValueError(f"values shape {v.shape} does not match grid nx={self.grid.nx}")
        scale = max(float(np.max(np.abs(v))), 1.0)
        if abs(v[0]) > 1e-9 * scale:
            raise ValueError(f"field must vanish at x=0, got {v[0]}")

    def l2_norm(self) -> float:
        w = trapezoid_weights(self.grid.nx, self.grid.dx)
        return float(np.sqrt(np.dot(w, np.asarray(self.values) ** 2)))


def _lower_quadrature(K: np.ndarray, values: np.ndarray, dx: float) -> np.ndarray:
    """Row-wise trapezoid of K[i, j] * values[j] over j in [0, i]."""
    P = np.tril(K) * values[None, :]
    out = dx * (np.cumsum(P, axis=1).diagonal() - 0.5 * (P[:, 0] + P.diagonal()))
    return out


def forward_transform(p: FieldSnapshot, kernel_source, t: float | None = None) -> FieldSnapshot:
    """Map the plant state to the target state: v(x) = p(x) - int_0^x k p dy."""
    t = p.time if t is None else t
    K = kernel_source.kernel_matrix(p.grid.xs, t)
    vals = np.asarray(p.values, dtype=float)
    out = vals - _lower_quadrature(K, vals, p.grid.dx)
    out[0] = 0.0
    return FieldSnapshot(grid=p.grid, values=out, time=t)


def inverse_transform(v: FieldSnapshot, inverse_source, t: float | None = None) -> FieldSnapshot:
    """Map the target state back: p(x) = v(x) + int_0^x r v dy."""
    t = v.time if t is None else t
    R = inverse_source.kernel_matrix(v.grid.xs, t)
    vals = np.asarray(v.values, dtype=float)
    out = vals + _lower_quadrature(R, vals, v.grid.dx)
    out[0] = 0.0
    return FieldSnapshot(grid=v.grid, values=out, time=t)


def target_residual(p_history: tuple[FieldSnapshot, FieldSnapshot, FieldSnapshot],
                    kernel_source, params: StringParams, sched: GainSchedule,
                    frozen_mu: float | None = None) -> np.ndarray:
    """Defect rho0 v_tt - Tf v_xx + mu v of the transformed trajectory.

    Probes how closely the transformed closed-loop state follows the
    target dynamics; the time-varying transform does not annihilate the
    kernel-rate cross coupling, so this is a measurement, not an identity.
    Returns the residual on interior nodes (end nodes zeroed).
    """
    pm, p0, pp = p_history
    dts = (p0.time - pm.time, pp.time - p0.time)
    if abs(dts[0] - dts[1]) > 1e-9 * max(dts):
        raise ValueError("snapshots must be uniformly spaced in time")
    dt = dts[0]
    vm = forward_transform(pm, kernel_source)
    v0 = forward_transform(p0, kernel_source)
    vp = forward_transform(pp, kernel_source)
    dx = p0.grid.dx
    a_m, a_0, a_p = (np.asarray(s.values) for s in (vm, v0, vp))
    v_tt = (a_p - 2 * a_0 + a_m) / dt ** 2
    v_xx = np.zeros_like(a_0)
    v_xx[1:-1] = (a_0[2:] - 2 * a_0[1:-1] + a_0[:-2]) / dx ** 2
    mu = frozen_mu if frozen_mu is not None else sched.mu_any(p0.time)
    res = params.rho0 * v_tt - params.Tf * v_xx + mu * a_0
    res[0] = res[-1] = 0.0
    return res
