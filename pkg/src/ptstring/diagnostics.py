"""Norms, energies, and Lyapunov-style diagnostics over trajectories."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bounds import BoundParams, gain_envelope_Mk
from .core import StringParams, trapezoid_weights
from .gain import GainSchedule
from .transforms import FieldSnapshot

__all__ = [
    "LyapunovWeights",
    "LyapunovValues",
    "lyapunov_eval",
    "energy_eval",
    "poincare_check",
    "phi_coefficients",
    "lambda1",
    "validity_cutoff",
    "theorem4_envelope",
    "default_weights",
]


@dataclass(frozen=True)
class LyapunovWeights:
    """Weights of the candidate functional V = V1 + alpha-cross-term.

    Admissibility: 0 < alpha < min(beta rho0, beta Tf)/(2 rho0), which keeps
    the bracketing constants sigma2 > 0 < sigma3 meaningful.
    """

    alpha: float
    beta: float
    delta1: float = 1.0
    delta2: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.delta1, self.delta2) <= 0:
            raise ValueError("all weights must be positive")

    def check_admissible(self, params: StringParams) -> None:
        ceiling = min(self.beta * params.rho0, self.beta * params.Tf) / (2 * params.rho0)
        if not self.alpha < ceiling:
            raise ValueError(f"alpha={self.alpha} must be below {ceiling}")

    def sigmas(self, params: StringParams) -> tuple[float, float]:
        s1 = 2 * self.alpha * params.rho0 / min(self.beta * params.rho0, self.beta * params.Tf)
        return 1.0 - s1, 1.0 + s1


def default_weights(params: StringParams) -> LyapunovWeights:
    """beta = 1 with alpha at 40% of the admissibility ceiling."""
    alpha = 0.4 * min(params.rho0, params.Tf) / (2 * params.rho0)
    return LyapunovWeights(alpha=alpha, beta=1.0)


class LyapunovValues(NamedTuple):
    V1: float
    V2: float
    V: float
    sigma2: float
    sigma3: float


def lyapunov_eval(v: np.ndarray, v_t: np.ndarray, v_x: np.ndarray, dx: float,
                  weights: LyapunovWeights, params: StringParams) -> LyapunovValues:
    """Evaluate V1, the cross term V2, and their sum on one snapshot.

    V1 = (beta/2)(rho0 int v_t^2 + Tf int v_x^2),
    V2 = alpha rho0 int x v_x v_t;  sigma2 V1 <= V <= sigma3 V1.
    """
    weights.check_admissible(params)
    n = v_t.size
    w = trapezoid_weights(n, dx)
    xs = np.arange(n) * dx
    V1 = 0.5 * weights.beta * (params.rho0 * float(np.dot(w, v_t ** 2))
                               + params.Tf * float(np.dot(w, v_x ** 2)))
    V2 = weights.alpha * params.rho0 * float(np.dot(w, xs * v_x * v_t))
    s2, s3 = weights.sigmas(params)
    return LyapunovValues(V1=V1, V2=V2, V=V1 + V2, sigma2=s2, sigma3=s3)


def energy_eval(p: FieldSnapshot, p_t: np.ndarray, params: StringParams) -> tuple[float, float]:
    """Kinetic and potential energy of the plant state.

    Ek = (M/2) p_t(1)^2 + (rho0/2) int p_t^2;  Ep = (Tf/2) int p_x^2.
    """
    p_t = np.asarray(p_t, dtype=float)
    if p_t.shape != (p.grid.nx,):
        raise ValueError("p_t must be sampled on the snapshot grid")
    w = trapezoid_weights(p.grid.nx, p.grid.dx)
    p_x = np.gradient(np.asarray(p.values, dtype=float), p.grid.dx, edge_order=2)
    Ek = 0.5 * params.M * p_t[-1] ** 2 + 0.5 * params.rho0 * float(np.dot(w, p_t ** 2))
    Ep = 0.5 * params.Tf * float(np.dot(w, p_x ** 2))
    return Ek, Ep


def poincare_check(p: FieldSnapshot) -> tuple[float, float]:
    """Return (int p^2, L^2 int p_x^2); the first never exceeds the second
    for fields pinned at x = 0."""
    vals = np.asarray(p.values, dtype=float)
    if abs(vals[0]) > 1e-9 * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("poincare_check requires p(0) = 0")
    w = trapezoid_weights(p.grid.nx, p.grid.dx)
    p_x = np.gradient(vals, p.grid.dx, edge_order=2)
    return float(np.dot(w, vals ** 2)), float(p.grid.L ** 2 * np.dot(w, p_x ** 2))


def phi_coefficients(t: float, weights: LyapunovWeights, params: StringParams,
                     sched: GainSchedule) -> tuple[float, float]:
    """Decay-rate coefficients phi1, phi2 of the dissipation inequality.

    phi1 = alpha rho0/(2 mu) - beta/delta1,
    phi2 = alpha Tf/(2 mu) - alpha delta2 - beta delta1 - alpha/delta1.
    Both must be positive for the differential inequality to dissipate;
    with the blow-up gain they inevitably turn negative, so the validity
    window is finite (often empty for aggressive schedules).
    """
    m = sched.mu_any(t)
    phi1 = weights.alpha * params.rho0 / (2 * m) - weights.beta / weights.delta1
    phi2 = (weights.alpha * params.Tf / (2 * m) - weights.alpha * weights.delta2
            - weights.beta * weights.delta1 - weights.alpha / weights.delta1)
    return phi1, phi2


def lambda1(t: float, weights: LyapunovWeights, params: StringParams,
            sched: GainSchedule) -> float:
    """lambda1 = min(2 phi1/(beta rho0), 2 phi2/(beta Tf)); may be negative."""
    phi1, phi2 = phi_coefficients(t, weights, params, sched)
    return min(2 * phi1 / (weights.beta * params.rho0), 2 * phi2 / (weights.beta * params.Tf))


def validity_cutoff(weights: LyapunovWeights, params: StringParams,
                    sched: GainSchedule, t_end: float, n_probe: int = 400) -> float:
    """Largest prefix [0, t_cut] on which phi1, phi2 stay positive.

    Returns 0.0 when the window is empty (the envelope is then only a
    formal Gronwall bound with non-positive rate).
    """
    ts = np.linspace(0.0, t_end, n_probe)
    for t in ts:
        p1, p2 = phi_coefficients(float(t), weights, params, sched)
        if p1 <= 0 or p2 <= 0:
            return float(t)
    return float(t_end)


def theorem4_envelope(t: float, V0: float, weights: LyapunovWeights,
                      sched: GainSchedule, params: StringParams,
                      bound_params: BoundParams, eps: float,
                      lam1: float | None = None, n_quad: int = 400,
                      return_log: bool = False) -> float:
    """Upper envelope for ||p(.,t)|| from the dissipation inequality.

    (1 + M_r(t)) sqrt( 2/(sigma2 Tf) * varsigma(t) * (V0 + eps *
    int_0^t exp((2 lam1/sigma3) int_0^s mu) ds) ), quadrature for the outer
    integral.  lam1 defaults to the worst (smallest) rate over [0, t] and
    eps should be the running maximum of the measured boundary defect, so
    the expression stays a valid Gronwall bound even where the rate has
    gone negative; it is then evaluated in log space because the growth
    factor exceeds float range long before T.  return_log=True yields
    ln(envelope) for plotting in that regime.
    """
    s2, s3 = weights.sigmas(params)
    if lam1 is None:
        ts = np.linspace(0.0, t, 200) if t > 0 else np.array([0.0])
        lam1 = min(lambda1(float(s), weights, params, sched) for s in ts)
    rate = 2.0 * lam1 / s3
    Mr = gain_envelope_Mk(t, bound_params, sched, params.Tf)
    if V0 == 0.0 and eps == 0.0:
        return -np.inf if return_log else 0.0
    phi_t = rate * sched.mu_integral(t) if t > 0 else 0.0
    terms = []
    if V0 > 0:
        terms.append(np.log(V0) - phi_t)
    if eps > 0 and t > 0:
        ss = np.linspace(0.0, t, n_quad)
        phi = rate * sched.mu_integral(ss)
        peak = float(np.max(phi))
        log_int = peak + np.log(max(float(np.trapezoid(np.exp(phi - peak), ss)), 1e-300))
        terms.append(np.log(eps) + log_int - phi_t)
    tot_log = terms[0] if len(terms) == 1 else float(np.logaddexp(terms[0], terms[1]))
    env_log = float(np.log1p(Mr) + 0.5 * (np.log(2.0 / (s2 * params.Tf)) + tot_log))
    if return_log:
        return env_log
    return float(np.inf) if env_log > 709 else float(np.exp(env_log))
