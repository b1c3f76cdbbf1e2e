"""Time-varying gain schedule mu(t), its derivatives, and the decay envelope."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .core import PTConfig

__all__ = ["GainSchedule"]


@dataclass(frozen=True)
class GainSchedule:
    """The blow-up gain mu(t) = mu0^2 T^2 / (T - t)^2 on [0, T).

    mu(0) = mu0^2, strictly increasing, unbounded as t -> T. Evaluated
    lazily; consumers must clamp queries away from T themselves.
    """

    mu0: float
    T: float

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")

    @classmethod
    def from_config(cls, cfg: PTConfig) -> "GainSchedule":
        return cls(mu0=cfg.mu0, T=cfg.T)

    def _check_time(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.T):
            raise ValueError(f"t must lie in [0, T={self.T}), got {t}")
        return t

    def mu(self, t):
        """Gain value mu0^2 T^2/(T-t)^2."""
        t = self._check_time(t)
        out = (self.mu0 * self.T / (self.T - t)) ** 2
        return float(out) if out.ndim == 0 else out

    def mu_any(self, t):
        """mu extended to all t < T (negative times included); used for
        ghost data of the kernel solver."""
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.T):
            raise ValueError(f"t must be < T={self.T}")
        out = (self.mu0 * self.T / (self.T - t)) ** 2
        return float(out) if out.ndim == 0 else out

    def mu_derivative(self, l: int, t):
        """l-th time derivative of mu in closed form.

        d^l/dt^l mu = mu^(l/2+1) (l+1)! / (mu0 T)^l; l = 0 returns mu itself.
        Half-integer powers go through exp/log so the large-mu regime near T
        does not overflow in an intermediate square root.
        """
        if l < 0 or int(l) != l:
            raise ValueError(f"l must be a non-negative integer, got {l}")
        t = self._check_time(t)
        m = (self.mu0 * self.T / (self.T - t)) ** 2
        if l == 0:
            out = m
        elif l % 2 == 0:
            out = m ** (l // 2 + 1) * factorial(l + 1) / (self.mu0 * self.T) ** l
        else:
            out = np.exp((l / 2 + 1) * np.log(m)) * factorial(l + 1) / (self.mu0 * self.T) ** l
        out = np.asarray(out)
        return float(out) if out.ndim == 0 else out

    def mu_integral(self, t):
        """int_0^t mu(s) ds = mu0^2 T t/(T - t), exact."""
        t = self._check_time(t)
        out = self.mu0 ** 2 * self.T * t / (self.T - t)
        return float(out) if np.ndim(out) == 0 else out

    def varsigma(self, lambda1_over_sigma3: float, t):
        """Decay envelope exp(-2(lam1/sig3) int_0^t mu) in closed form.

        Equals exp(2 r mu0^2 T) * exp(-2 r mu0^2 T * T/(T-t)) with
        r = lambda1_over_sigma3; equals 1 at t = 0 and tends to 0 as t -> T
        whenever r > 0.
        """
        if lambda1_over_sigma3 <= 0:
            raise ValueError("rate coefficient must be > 0")
        t = self._check_time(t)
        r = lambda1_over_sigma3
        out = np.exp(2.0 * r * self.mu0 ** 2 * self.T * (1.0 - self.T / (self.T - t)))
        return float(out) if np.ndim(out) == 0 else out
