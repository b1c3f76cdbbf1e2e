"""Finite-difference kernel solver, inverse kernel, and boundary traces.

The kernel PDE  rho0 k_tt = Tf k_xx - Tf k_yy - mu(t) k  has the indefinite
spatial operator k_xx - k_yy, so explicit marching in t is unconditionally
unstable (interior modes oscillating faster in y than in x grow like
exp(c*sqrt(ky^2-kx^2)*t), with rate ~ c*pi/dx at grid scale).  The
well-posed marching direction is the characteristic one: in xi = x + y,
eta = x - y the problem is Goursat,

    F_xi_eta = (rho0 F_tt + mu(t) F) / (4 Tf),
    F(xi, 0, t) = -mu(t) xi / (4 Tf)   (the diagonal y = x, known exactly),
    F(eta, eta, t) = 0                 (the edge y = 0),

and the solver marches eta rows upward, accumulating the double integral
with trapezoid weights.  The time axis is handled once per row by a banded
implicit solve (centered second differences; a series-oracle ghost column
at t = -dt carries the initial data; a backward stencil closes the top row
inside a causal pad above t_end that is discarded afterwards).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_banded

from .core import StringParams, TriGrid, wave_speed
from .gain import GainSchedule
from .kernel_series import SeriesKernel, build_series_kernel

__all__ = [
    "KernelField",
    "InverseKernelField",
    "BoundaryTraces",
    "CFLError",
    "solve_kernel_fd",
    "solve_inverse_kernel",
    "boundary_traces",
    "field_from_series",
    "volterra_relation_residual",
    "inverse_pde_residual",
]


class CFLError(ValueError):
    """Raised when a step size violates its stability bound."""


class BoundaryTraces(NamedTuple):
    """Kernel rows at x = 1 consumed by the boundary control law."""

    k11: float
    kx_row: np.ndarray
    ky11: float
    kyy_row: np.ndarray


@dataclass
class KernelField:
    """Kernel values on a TriGrid at uniformly spaced times.

    values[i, j, m] = k(x_i, y_j, t_m) for j <= i (NaN above the diagonal).
    """

    grid: TriGrid
    times: np.ndarray
    values: np.ndarray
    params: StringParams
    sched: GainSchedule
    frozen: bool = False

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def mu_eff(self, t) -> float:
        return self.sched.mu0 ** 2 if self.frozen else float(self.sched.mu_any(t))

    def slice_at(self, t: float, clamp: bool = False) -> np.ndarray:
        """Kernel matrix at time t, linearly interpolated between slices."""
        t0, t1 = self.times[0], self.times[-1]
        if clamp:
            t = min(max(t, t0), t1)
        elif t < t0 - 1e-12 or t > t1 + 1e-12:
            raise ValueError(f"t={t} outside stored range [{t0}, {t1}]")
        pos = np.interp(t, self.times, np.arange(self.times.size))
        lo = int(np.floor(pos))
        hi = min(lo + 1, self.times.size - 1)
        w = pos - lo
        return (1.0 - w) * self.values[:, :, lo] + w * self.values[:, :, hi]

    def kernel_matrix(self, xs: np.ndarray, t: float) -> np.ndarray:
        """Lower-triangular k(x_i, x_j, t) on an arbitrary uniform grid,
        bilinearly interpolated from the stored triangle.

        Rows are extended past their diagonal with the diagonal value so
        the stencil never blends with the undefined upper triangle.
        """
        sl = self.slice_at(t, clamp=True)
        sl = np.where(np.isnan(sl), np.diag(sl)[:, None], sl)
        gx = self.grid.xs
        pos = np.interp(xs, gx, np.arange(gx.size))
        lo = np.clip(np.floor(pos).astype(int), 0, gx.size - 2)
        w = pos - lo
        a = sl[lo, :][:, lo] * (1 - w)[:, None] * (1 - w)[None, :]
        b = sl[lo + 1, :][:, lo] * w[:, None] * (1 - w)[None, :]
        c = sl[lo, :][:, lo + 1] * (1 - w)[:, None] * w[None, :]
        d = sl[lo + 1, :][:, lo + 1] * w[:, None] * w[None, :]
        return np.tril(a + b + c + d)


@dataclass
class InverseKernelField(KernelField):
    """Inverse-transform kernel r(x, y, t), same layout as KernelField."""


def solve_kernel_fd(params: StringParams, sched: GainSchedule, grid: TriGrid,
                    dt: float, t_end: float, oracle: SeriesKernel | None = None,
                    pad_factor: float = 1.2, frozen: bool = False) -> KernelField:
    """March the kernel PDE in characteristic coordinates.

    dt must satisfy dt <= dx/(c sqrt(2)); t_end must stay below the gain
    singularity.  Initial data enters through a series-oracle ghost column
    at t = -dt.  frozen=True solves the constant-gain kernel instead (for
    the exponential baseline); the same march applies with mu held fixed.
    """
    c = wave_speed(params)
    d = grid.dx
    if dt > d / (c * np.sqrt(2.0)) + 1e-14:
        raise CFLError(
            f"dt={dt:.3e} violates the kernel march bound dx/(c*sqrt(2))="
            f"{d / (c * np.sqrt(2)):.3e}"
        )
    if not frozen and t_end >= sched.T:
        raise ValueError(f"t_end={t_end} must be below the prescribed time T={sched.T}")

    if oracle is None:
        oracle = build_series_kernel(params, sched, t_max=0.0, frozen=frozen)

    n = grid.n
    A = 2 * (n - 1)
    h = d
    xi_all = np.arange(A + 1) * h
    pad = pad_factor / c
    t_top = t_end + pad if frozen else min(t_end + pad, sched.T - 0.01)
    if not frozen and t_top - t_end < 1.0 / c:
        warnings.warn(
            "causal pad truncated by the gain singularity; top-edge stencil "
            "errors may reach the last reported slices", stacklevel=2)
    M = int(np.ceil(t_top / dt))
    t_grid = np.arange(M + 1) * dt
    mu_t = np.full(M + 1, sched.mu0 ** 2) if frozen else sched.mu_any(t_grid)
    m_out = int(np.floor(t_end / dt + 1e-9))

    # banded matrix (I - w_cell * (rho0 D_tt + mu)/(4 Tf)), bands (l=2, u=1):
    # centered rows; ghost Dirichlet at m=0 (to RHS); backward stencil at m=M
    w_cell = h * h / 4.0
    rr = w_cell * params.rho0 / (4.0 * params.Tf) / dt ** 2
    qq = w_cell / (4.0 * params.Tf)
    ab = np.zeros((4, M + 1))
    ab[1, :] = 1.0 - qq * mu_t
    ab[0, 2:M] = -rr
    ab[1, 1:M] += 2 * rr
    ab[2, 0:M - 1] = -rr
    ab[1, 0] += 2 * rr
    ab[0, 1] = -rr
    ab[1, M] += rr
    ab[2, M - 1] = 2 * rr
    ab[3, M - 2] = -rr

    def d_tt(row: np.ndarray, ghost: float) -> np.ndarray:
        out = np.empty_like(row)
        out[1:M] = row[2:] - 2 * row[1:M] + row[:M - 1]
        out[0] = row[1] - 2 * row[0] + ghost
        out[M] = row[M] - 2 * row[M - 1] + row[M - 2]
        return out / dt ** 2

    def h_of(row: np.ndarray, ghost: float) -> np.ndarray:
        return (params.rho0 * d_tt(row, ghost) + mu_t * row) / (4.0 * params.Tf)

    K = np.full((n, n, m_out + 1), np.nan)

    # row 0: the diagonal y = x, exact data
    F = -np.outer(xi_all, mu_t) / (4.0 * params.Tf)
    ghost_mu = sched.mu0 ** 2 if frozen else float(sched.mu_any(-dt))
    ghosts = -xi_all * ghost_mu / (4.0 * params.Tf)
    for i in range(n):
        K[i, i, :] = F[2 * i, :m_out + 1]
    S = np.zeros_like(F)
    H_prev = np.array([h_of(F[a], ghosts[a]) for a in range(A + 1)])

    for b in range(n - 1):
        bn = b + 1
        eta_n = bn * h
        lo, hi = bn, A - bn
        xv = (xi_all[lo:hi + 1] + eta_n) / 2.0
        yv = (xi_all[lo:hi + 1] - eta_n) / 2.0
        ghosts = np.zeros(A + 1)
        ghosts[lo:hi + 1] = oracle.eval(xv, yv, 0.0) if frozen else oracle.eval(xv, yv, -dt)

        F_new = np.zeros_like(F)
        H_new = np.zeros_like(F)
        # a = lo sits on the y = 0 edge: F = 0 at all times, ghost included
        dmu_col = -mu_t * h / (4.0 * params.Tf)
        for a in range(lo + 1, hi + 1):
            s_half_prev = S[a - 1] + (h / 2.0) * (H_prev[a - 1] + H_new[a - 1])
            rhs = F_new[a - 1] + dmu_col + (h / 2.0) * (s_half_prev + S[a] + (h / 2.0) * H_prev[a])
            rhs = rhs.copy()
            rhs[0] += rr * ghosts[a]
            F_new[a] = solve_banded((2, 1), ab, rhs)
            H_new[a] = h_of(F_new[a], ghosts[a])
        S[lo:hi + 1] += (h / 2.0) * (H_prev[lo:hi + 1] + H_new[lo:hi + 1])
        F, H_prev = F_new, H_new
        for j in range(n - bn):
            K[j + bn, j, :] = F[2 * j + bn, :m_out + 1]

    return KernelField(grid=grid, times=t_grid[:m_out + 1], values=K,
                       params=params, sched=sched, frozen=frozen)


def field_from_series(series: SeriesKernel, grid: TriGrid, times: np.ndarray) -> KernelField:
    """Tabulate a series kernel on a TriGrid (for trace tables and tests)."""
    n = grid.n
    xs = grid.xs
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = np.tril(np.ones((n, n), dtype=bool))
    vals = np.full((n, n, len(times)), np.nan)
    for m, t in enumerate(times):
        sl = np.full((n, n), np.nan)
        sl[mask] = series.eval(X[mask], Y[mask], float(t))
        vals[:, :, m] = sl
    return KernelField(grid=grid, times=np.asarray(times, dtype=float), values=vals,
                       params=series.params, sched=series.sched, frozen=series.frozen)


def _fixed_point_slice(K: np.ndarray, d: float, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Solve r = k + int_y^x k(x,g) r(g,y) dg on one slice by iteration.

    Trapezoid quadrature collapses to one matrix product per sweep because
    both factors vanish outside the triangle.
    """
    K = np.nan_to_num(K)
    dK = np.diag(K)
    R = K.copy()
    for it in range(max_iter):
        corr = 0.5 * (K * np.diag(R)[None, :] + dK[:, None] * R)
        R_new = K + d * (K @ R - corr)
        delta = float(np.max(np.abs(R_new - R)))
        R = R_new
        if delta < tol:
            return np.tril(R), it + 1
    raise RuntimeError(
        f"inverse-kernel fixed point did not reach {tol:.1e} in {max_iter} sweeps "
        f"(last change {delta:.2e}); grid too coarse or t too close to the blow-up"
    )


def solve_inverse_kernel(k_field: KernelField, slice_times: np.ndarray | None = None,
                         tol: float = 1e-10, max_iter: int = 400) -> InverseKernelField:
    """Inverse kernel r(x, y, t) per stored slice via the Volterra fixed point.

    Starts from r = k and iterates until the sup-norm change drops below
    tol; the reciprocity relation is then satisfied to that level, which
    the residual helpers below verify independently.
    """
    grid = k_field.grid
    d = grid.dx
    if slice_times is None:
        slice_times = k_field.times
    slice_times = np.asarray(slice_times, dtype=float)
    vals = np.full((grid.n, grid.n, slice_times.size), np.nan)
    mask = grid.mask()
    for m, t in enumerate(slice_times):
        K = k_field.slice_at(float(t))
        R, _ = _fixed_point_slice(K, d, tol, max_iter)
        sl = np.full((grid.n, grid.n), np.nan)
        sl[mask] = R[mask]
        vals[:, :, m] = sl
    return InverseKernelField(grid=grid, times=slice_times, values=vals,
                              params=k_field.params, sched=k_field.sched,
                              frozen=k_field.frozen)


def volterra_relation_residual(k_slice: np.ndarray, r_slice: np.ndarray, d: float) -> float:
    """Sup-norm defect of r = k + int_y^x k(x,g) r(g,y) dg on one slice."""
    K = np.nan_to_num(k_slice)
    R = np.nan_to_num(r_slice)
    corr = 0.5 * (K * np.diag(R)[None, :] + np.diag(K)[:, None] * R)
    rhs = K + d * (K @ R - corr)
    return float(np.max(np.abs(np.tril(rhs) - np.tril(R))))


def inverse_pde_residual(r_field: InverseKernelField, m_index: int) -> float:
    """Centered-difference residual of the inverse-kernel PDE
    rho0 r_tt = -Tf r_yy + Tf r_xx + mu r at an interior stored slice,
    normalized by the slice magnitude."""
    if not 1 <= m_index < r_field.times.size - 1:
        raise ValueError("need an interior time index")
    dt = float(r_field.times[m_index + 1] - r_field.times[m_index])
    d = r_field.grid.dx
    n = r_field.grid.n
    V = r_field.values
    t = float(r_field.times[m_index])
    mu = r_field.mu_eff(t)
    res_max = 0.0
    scale = float(np.nanmax(np.abs(V[:, :, m_index])))
    for i in range(1, n - 1):
        for j in range(1, i):
            if j + 1 > i:  # y-stencil must stay in the triangle
                continue
            r_tt = (V[i, j, m_index + 1] - 2 * V[i, j, m_index] + V[i, j, m_index - 1]) / dt ** 2
            r_xx = (V[i + 1, j, m_index] - 2 * V[i, j, m_index] + V[i - 1, j, m_index]) / d ** 2
            r_yy = (V[i, j + 1, m_index] - 2 * V[i, j, m_index] + V[i, j - 1, m_index]) / d ** 2
            res = (r_field.params.rho0 * r_tt + r_field.params.Tf * r_yy
                   - r_field.params.Tf * r_xx - mu * V[i, j, m_index])
            if np.isfinite(res):
                res_max = max(res_max, abs(res))
    return res_max / max(scale, 1e-300)


def _extrapolate_tail(row: np.ndarray, n_valid: int) -> np.ndarray:
    """Fill the last entries of a trace row by quadratic extrapolation."""
    out = row.copy()
    n = row.size
    if n_valid >= 3:
        for j in range(n_valid, n):
            out[j] = 3 * out[j - 1] - 3 * out[j - 2] + out[j - 3]
    else:
        out[n_valid:] = out[n_valid - 1]
    return out


def boundary_traces(field: KernelField, t: float, clamp: bool = False) -> BoundaryTraces:
    """Kernel rows at x = 1 for the control law.

    k(1,1,t) comes from the closed-form diagonal; k_x(1,y,t) uses
    second-order one-sided differences in x (the two nodes next to the
    diagonal, where the x-stencil leaves the triangle, are filled by
    quadratic extrapolation along the row); k_y(1,1,t) and k_yy(1,y,t) use
    one-sided/central differences in y.
    """
    sl = field.slice_at(t, clamp=clamp)
    n = field.grid.n
    d = field.grid.dx
    k11 = -field.mu_eff(min(t, field.times[-1]) if clamp else t) / (2.0 * field.params.Tf)

    kx = np.full(n, np.nan)
    jj = np.arange(0, n - 2)
    kx[jj] = (3 * sl[n - 1, jj] - 4 * sl[n - 2, jj] + sl[n - 3, jj]) / (2 * d)
    kx = _extrapolate_tail(kx, n - 2)

    ky11 = (3 * sl[n - 1, n - 1] - 4 * sl[n - 1, n - 2] + sl[n - 1, n - 3]) / (2 * d)

    row = sl[n - 1, :]
    kyy = np.empty(n)
    kyy[1:n - 1] = (row[2:] - 2 * row[1:n - 1] + row[:n - 2]) / d ** 2
    kyy[0] = (2 * row[0] - 5 * row[1] + 4 * row[2] - row[3]) / d ** 2
    kyy[n - 1] = (2 * row[n - 1] - 5 * row[n - 2] + 4 * row[n - 3] - row[n - 4]) / d ** 2

    return BoundaryTraces(k11=float(k11), kx_row=kx, ky11=float(ky11), kyy_row=kyy)
