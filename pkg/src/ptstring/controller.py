"""Boundary control laws: prescribed-time and frozen-gain baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import StringParams, trapezoid_weights
from .kernel_fd import BoundaryTraces
from .transforms import FieldSnapshot

__all__ = ["ControlSample", "pt_control", "exp_baseline_control", "boundary_slope"]


@dataclass(frozen=True)
class ControlSample:
    """Boundary force u(t) at the actuated end."""

    t: float
    u: float


def boundary_slope(values: np.ndarray, dx: float) -> float:
    """Second-order one-sided estimate of p_x at x = 1."""
    return float((3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dx))


def pt_control(p: FieldSnapshot, px1: float, traces: BoundaryTraces,
               params: StringParams, t: float | None = None) -> ControlSample:
    """Prescribed-time boundary force.

    u = Tf k(1,1) p(1) + Tf int k_x(1,y) p dy
        + (M Tf/rho0) [ k(1,1) p_x(1) - k_y(1,1) p(1) + int k_yy(1,y) p dy ]

    with the integrals by trapezoid on the snapshot grid.  All terms are
    linear in the state, so zero state gives zero force; M = 0 drops the
    mass-weighted group.
    """
    t = p.time if t is None else t
    w = trapezoid_weights(p.grid.nx, p.grid.dx)
    vals = np.asarray(p.values, dtype=float)
    if traces.kx_row.shape != vals.shape:
        raise ValueError("trace rows and snapshot grid disagree")
    Tf, M, rho0 = params.Tf, params.M, params.rho0
    u = Tf * traces.k11 * vals[-1] + Tf * float(np.dot(w, traces.kx_row * vals))
    if M > 0:
        u += (M * Tf / rho0) * (traces.k11 * px1 - traces.ky11 * vals[-1]
                                + float(np.dot(w, traces.kyy_row * vals)))
    return ControlSample(t=t, u=float(u))


def exp_baseline_control(p: FieldSnapshot, px1: float, frozen_traces: BoundaryTraces,
                         params: StringParams, t: float | None = None) -> ControlSample:
    """Baseline force: the same formula fed by a constant-gain kernel.

    The gain is held at its initial value mu0^2, isolating the effect of
    the time-varying schedule in comparison runs.
    """
    return pt_control(p, px1, frozen_traces, params, t=t)
