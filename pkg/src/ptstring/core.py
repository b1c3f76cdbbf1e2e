"""Physical parameters, grids, and quadrature shared by every module."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "StringParams",
    "PTConfig",
    "SpatialGrid",
    "TriGrid",
    "Lemma2Result",
    "wave_speed",
    "minimal_time",
    "check_prescribed_time",
    "integrate_1d",
    "trapezoid_weights",
    "integrate_lemma2_check",
]


@dataclass(frozen=True)
class StringParams:
    """Plant constants of the flexible string.

    rho0: mass per unit length (kg/m), Tf: tension (N), M: tip payload mass
    (kg), L: string length (m, fixed to 1; the model is normalized).
    """

    rho0: float
    Tf: float
    M: float = 0.0
    L: float = 1.0

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError(f"rho0 must be > 0, got {self.rho0}")
        if self.Tf <= 0:
            raise ValueError(f"Tf must be > 0, got {self.Tf}")
        if self.M < 0:
            raise ValueError(f"M must be >= 0, got {self.M}")
        if self.L != 1.0:
            raise ValueError("L is fixed to 1 (normalized model)")


def wave_speed(params: StringParams) -> float:
    """Transverse wave speed sqrt(Tf/rho0) in m/s."""
    return float(np.sqrt(params.Tf / params.rho0))


def minimal_time(params: StringParams) -> float:
    """One wave round trip 2L/c: no boundary law can stabilize faster."""
    return 2.0 * params.L / wave_speed(params)


@dataclass(frozen=True)
class PTConfig:
    """Prescribed-time controller configuration.

    T: terminal time (s), mu0: gain base, eps_stop: how long before T the
    closed-loop simulation halts (the gain blows up at T).
    """

    T: float
    mu0: float
    eps_stop: float = 0.05

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if self.mu0 <= 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if not 0 < self.eps_stop < self.T:
            raise ValueError(f"eps_stop must lie in (0, T), got {self.eps_stop}")


def check_prescribed_time(params: StringParams, cfg: PTConfig) -> None:
    """Reject prescribed times at or below the wave round-trip minimum."""
    tmin = minimal_time(params)
    if cfg.T <= tmin:
        raise ValueError(
            f"prescribed time T={cfg.T} must exceed the minimal "
            f"controllability time {tmin:.6f}"
        )


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of nx nodes covering [0, 1] inclusive."""

    nx: int
    L: float = 1.0

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")

    @property
    def dx(self) -> float:
        return self.L / (self.nx - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx)


@dataclass(frozen=True)
class TriGrid:
    """n-per-axis grid on the closed triangle 0 <= y <= x <= 1.

    Node (i, j) carries (x_i, y_j) = (i*dx, j*dx) and is addressable only
    for j <= i.
    """

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"n must be >= 3, got {self.n}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    def in_domain(self, i: int, j: int) -> bool:
        return 0 <= j <= i <= self.n - 1

    def mask(self) -> np.ndarray:
        """Boolean (n, n) array, True where j <= i."""
        return np.tril(np.ones((self.n, self.n), dtype=bool))


def integrate_1d(samples, dx: float) -> float:
    """Composite trapezoid rule on a uniform grid; exact for affine data."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] < 2:
        raise ValueError("integrate_1d needs at least 2 samples")
    return float(np.trapezoid(samples, dx=dx)) if samples.ndim == 1 else np.trapezoid(samples, dx=dx, axis=-1)


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    """Quadrature weight vector of the composite trapezoid rule."""
    w = np.full(n, dx)
    w[0] = w[-1] = dx / 2.0
    return w


class Lemma2Result(NamedTuple):
    first_numeric: float
    first_closed: float
    second_numeric: float
    second_closed: float


def integrate_lemma2_check(n: int, xi: float, eta: float, resolution: int = 1001) -> Lemma2Result:
    """Evaluate both double-integral identities used by the kernel analysis.

    First:  int_0^eta int_0^tau (s*tau)^(n-1) (s+tau) ds dtau = eta^(2n+1)/(n(n+1))
    Second: int_eta^xi int_0^eta (s*tau)^(n-1) (tau-s) ds dtau
            = (xi*eta)^n (xi-eta)/(n(n+1)),  0 <= eta <= xi.

    Quadrature self-test only; both sides returned so callers can compare.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if eta < 0 or eta > xi:
        raise ValueError(f"need 0 <= eta <= xi, got eta={eta}, xi={xi}")

    tau1 = np.linspace(0.0, eta, resolution)
    inner = np.empty(resolution)
    for i, tv in enumerate(tau1):
        s = np.linspace(0.0, tv, resolution)
        inner[i] = np.trapezoid((s * tv) ** (n - 1) * (s + tv), s)
    first_num = float(np.trapezoid(inner, tau1))
    first_closed = eta ** (2 * n + 1) / (n * (n + 1))

    tau2 = np.linspace(eta, xi, resolution)
    s2 = np.linspace(0.0, eta, resolution)
    S, Tt = np.meshgrid(s2, tau2, indexing="ij")
    f = (S * Tt) ** (n - 1) * (Tt - S)
    second_num = float(np.trapezoid(np.trapezoid(f, s2, axis=0), tau2))
    second_closed = (xi * eta) ** n * (xi - eta) / (n * (n + 1))

    return Lemma2Result(first_num, first_closed, second_num, second_closed)
