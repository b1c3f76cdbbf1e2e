import numpy as np
import pytest
import scipy.special

from ptstring.core import StringParams
from ptstring.gain import GainSchedule
from ptstring.kernel_series import (build_series_kernel, kernel_diagonal,
                                    next_iterate, to_characteristic,
                                    truncation_bound)

PARAMS = StringParams(rho0=1.0, Tf=45.0, M=1.0)
SCHED = GainSchedule(mu0=5.0, T=3.0)
KAP = 1.0 / (4.0 * PARAMS.Tf)


def iterate_closed_form(n, xi, eta, t, params=PARAMS, sched=SCHED):
    """Hand-derived value of the n-th iterate.

    The recursion preserves the shape c_n mu^n (xi eta)^(n-1)(xi-eta): the
    double integral maps (s tau)^(m-1)(tau-s) to (xi eta)^m (xi-eta)/(m(m+1))
    and both time operations scale the coefficient, giving

      c_n = -(1/(4Tf))^n prod_{m=1}^{n-1} [1 + 2 rho0 m(2m+1)/(mu0 T)^2]
            / ((n-1)! n!).
    """
    muT2 = (sched.mu0 * sched.T) ** 2
    kap = 1.0 / (4.0 * params.Tf)
    m = sched.mu_any(t)
    term = -kap * m * (xi - eta)
    for j in range(1, n):
        term *= kap * m * (1 + 2 * params.rho0 * j * (2 * j + 1) / muT2) * xi * eta / (j * (j + 1))
    return term


@pytest.fixture(scope="module")
def kernel():
    return build_series_kernel(PARAMS, SCHED, t_max=2.7)


class TestCharacteristicMap:
    def test_examples(self):
        assert to_characteristic(1.0, 1.0) == (2.0, 0.0)
        assert to_characteristic(1.0, 0.0) == (1.0, 1.0)
        assert to_characteristic(0.75, 0.25) == (1.0, 0.5)

    def test_rejects_upper_triangle(self):
        with pytest.raises(ValueError):
            to_characteristic(0.2, 0.4)

    @pytest.mark.parametrize("x,y", [(0.3, 0.1), (1.0, 0.5), (0.9, 0.9)])
    def test_image_in_wedge(self, x, y):
        xi, eta = to_characteristic(x, y)
        assert 0.0 <= eta <= 1.0
        assert eta <= xi <= 2.0 - eta + 1e-15


class TestNextIterate:
    def test_zero_maps_to_zero(self):
        assert next_iterate({}, PARAMS, SCHED) == {}

    def test_second_iterate_against_quadrature(self):
        # apply the recursion to the seed and compare with brute-force
        # numerical evaluation of the defining double integral
        seed = {(1, 1, 0): -KAP, (1, 0, 1): KAP}
        it2 = next_iterate(seed, PARAMS, SCHED)
        t = 0.0
        mu = SCHED.mu(t)
        d2mu = SCHED.mu_derivative(2, t)
        for xi, eta in ((0.9, 0.3), (1.5, 0.4)):
            s = np.linspace(0.0, eta, 2001)
            tau = np.linspace(eta, xi, 2001)
            S, Tt = np.meshgrid(s, tau, indexing="ij")
            integrand = (PARAMS.rho0 * (-KAP * d2mu) * (Tt - S)
                         + mu * (-KAP * mu) * (Tt - S)) * KAP
            brute = np.trapezoid(np.trapezoid(integrand, s, axis=0), tau)
            sym = sum(c * mu ** a * xi ** p * eta ** q for (a, p, q), c in it2.items())
            assert sym == pytest.approx(brute, rel=1e-10)

    def test_vanishes_at_eta_zero_from_second_iterate(self):
        seed = {(1, 1, 0): -KAP, (1, 0, 1): KAP}
        terms = seed
        for n in range(2, 6):
            terms = next_iterate(terms, PARAMS, SCHED)
            val = sum(c * 1.0 ** a * 1.3 ** p * 0.0 ** q for (a, p, q), c in terms.items())
            assert val == 0.0  # every monomial gained a positive eta power

    @pytest.mark.parametrize("n", range(2, 9))
    def test_matches_closed_form(self, n):
        terms = {(1, 1, 0): -KAP, (1, 0, 1): KAP}
        for _ in range(n - 1):
            terms = next_iterate(terms, PARAMS, SCHED)
        mu = SCHED.mu(0.7)
        scale = abs(iterate_closed_form(n, 1.2, 0.4, 0.7))
        for xi, eta in ((1.2, 0.4), (1.0, 1.0), (0.6, 0.5)):
            sym = sum(c * mu ** a * xi ** p * eta ** q for (a, p, q), c in terms.items())
            # xi = eta cancels only up to float dust in the raw monomial sum
            assert sym == pytest.approx(iterate_closed_form(n, xi, eta, 0.7),
                                        rel=1e-12, abs=1e-13 * scale)


class TestEval:
    def test_boundary_row_exactly_zero(self, kernel):
        xs = np.linspace(0.0, 1.0, 7)
        assert np.all(kernel.eval(xs, np.zeros_like(xs), 1.3) == 0.0)

    def test_diagonal_closed_form(self, kernel):
        for t in np.linspace(0.0, 0.9 * SCHED.T, 5):
            xs = np.linspace(0.0, 1.0, 9)
            ref = kernel_diagonal(xs, float(t), PARAMS, SCHED)
            got = kernel.eval(xs, xs, float(t))
            assert np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))) <= 1e-12

    def test_reference_values(self, kernel):
        assert kernel.eval(1.0, 1.0, 0.0) == pytest.approx(-0.2777778, abs=1e-6)
        assert kernel.eval(0.5, 0.25, 0.0, N=1) == pytest.approx(-0.0694444, abs=1e-6)

    def test_domain_gate(self, kernel):
        with pytest.raises(ValueError):
            kernel.eval(0.25, 0.5, 0.0)
        with pytest.raises(ValueError):
            kernel.eval(1.0, 0.5, 2.95)  # beyond the built horizon

    def test_cauchy_tail(self, kernel):
        # successive partial sums differ by exactly the next iterate, which
        # the product-form bound dominates
        for (x, y, t) in ((0.9, 0.4, 1.5), (1.0, 0.2, 2.4), (0.7, 0.65, 2.7)):
            xi, eta = to_characteristic(x, y)
            for N in (3, 6, 10):
                gap = abs(kernel.eval(x, y, t, N=N + 1) - kernel.eval(x, y, t, N=N))
                assert gap <= truncation_bound(N + 1, xi, eta, t, PARAMS, SCHED) * (1 + 1e-9)


class TestTruncationBound:
    def test_degenerate_zeros(self):
        assert truncation_bound(3, 1.2, 0.0, 0.0, PARAMS, SCHED) == 0.0
        assert truncation_bound(3, 0.8, 0.8, 0.0, PARAMS, SCHED) == 0.0

    def test_dominates_second_iterate_at_probe(self):
        b = truncation_bound(2, 2.0, 1.0, 0.0, PARAMS, SCHED)
        assert b > 0.0
        assert abs(iterate_closed_form(2, 2.0, 1.0, 0.0)) <= b

    @pytest.mark.parametrize("n", range(2, 25))
    def test_majorizes_iterates_everywhere_sampled(self, n):
        for (xi, eta, t) in ((2.0, 1.0, 0.0), (1.2, 0.4, 2.4), (1.9, 0.1, 2.7),
                             (1.0, 0.9, 1.5), (1.3, 0.01, 2.7)):
            assert abs(iterate_closed_form(n, xi, eta, t)) <= \
                truncation_bound(n, xi, eta, t, PARAMS, SCHED) * (1 + 1e-12)


class TestIntegralEquationResidual:
    def test_truncated_series_satisfies_integral_equation(self, kernel):
        # substitute the truncated series into the right-hand side of its
        # defining integral equation (numerical double quadrature, centered
        # time differences) and recover the series within the tail bound
        t, dt = 1.2, 1e-4
        xi, eta = 1.1, 0.5
        x_pt, y_pt = (xi + eta) / 2, (xi - eta) / 2
        m = 301
        s = np.linspace(0.0, eta, m)
        tau = np.linspace(eta, xi, m)
        S, Tt = np.meshgrid(s, tau, indexing="ij")
        Xg, Yg = (Tt + S) / 2, (Tt - S) / 2

        def F(tt):
            return kernel.eval(Xg, Yg, tt)

        F_tt = (F(t + dt) - 2 * F(t) + F(t - dt)) / dt ** 2
        H = (PARAMS.rho0 * F_tt + SCHED.mu(t) * F(t)) / (4 * PARAMS.Tf)
        rhs = (-SCHED.mu(t) * (xi - eta) / (4 * PARAMS.Tf)
               + np.trapezoid(np.trapezoid(H, s, axis=0), tau))
        lhs = kernel.eval(x_pt, y_pt, t)
        tail = truncation_bound(kernel.n_iterates + 1, xi, eta, t, PARAMS, SCHED)
        quad_slop = 5e-6  # trapezoid + FD-in-t error at this resolution
        assert abs(lhs - rhs) <= tail + quad_slop


class TestFrozenKernel:
    def test_matches_classical_bessel_form(self):
        # constant gain: k(x,y) = -(mu0^2/(2Tf)) y * I1(z)/(z/2) with
        # z = sqrt(mu0^2 (x^2-y^2)/Tf); checked against scipy's iv
        frozen = build_series_kernel(PARAMS, SCHED, t_max=1.0, frozen=True)
        lam = SCHED.mu0 ** 2
        for (x, y) in ((0.8, 0.3), (1.0, 0.7), (0.5, 0.5)):
            got = frozen.eval(x, y, 0.9)  # time-independent
            z = np.sqrt(lam * (x ** 2 - y ** 2) / PARAMS.Tf)
            ref = -lam / PARAMS.Tf * y * (scipy.special.iv(1, z) / z if z > 0 else 0.5)
            assert got == pytest.approx(ref, rel=1e-10)

    def test_time_independent(self):
        frozen = build_series_kernel(PARAMS, SCHED, t_max=1.0, frozen=True)
        a = frozen.eval(0.9, 0.2, 0.1)
        b = frozen.eval(0.9, 0.2, 2.9)
        assert a == b


class TestDerivativeTraces:
    def test_rows_against_finite_differences(self, kernel):
        t = 1.7
        ys = np.linspace(0.0, 1.0, 9)[:-1]
        h = 1e-6
        k11, kx_row, ky11, kyy_row = kernel.traces(t, ys)
        # k_x by centered difference in x (interior y only)
        kx_fd = (kernel.eval(np.ones_like(ys), ys, t) * 0.0)
        for i, y in enumerate(ys):
            kx_fd[i] = (kernel.eval(1.0, y, t) - kernel.eval(1.0 - h, y, t)) / h
        assert np.max(np.abs(kx_row - kx_fd)) <= 1e-4 * max(1.0, np.max(np.abs(kx_fd)))
        # k_yy by centered second difference
        for y in (0.3, 0.6):
            fd = (kernel.eval(1.0, y + h, t) - 2 * kernel.eval(1.0, y, t)
                  + kernel.eval(1.0, y - h, t)) / h ** 2
            row = kernel.eval_kyy(1.0, y, t)
            assert float(row) == pytest.approx(fd, rel=1e-3)

    def test_k11_closed_form(self, kernel):
        assert kernel.traces(0.0, np.array([0.0, 1.0]))[0] == pytest.approx(-0.2777778, abs=1e-6)


def test_iterate_terms_accessor():
    from ptstring.kernel_series import MonomialTerm
    k = build_series_kernel(PARAMS, SCHED, t_max=0.5, n_iter=3)
    terms = k.iterate_terms(1)
    assert all(isinstance(t, MonomialTerm) for t in terms)
    assert {(t.a, t.p, t.q) for t in terms} == {(1, 1, 0), (1, 0, 1)}
    # iterate n carries the uniform gain power a = n
    assert all(t.a == 2 for t in k.iterate_terms(2))


def test_export_terms(tmp_path):
    k = build_series_kernel(PARAMS, SCHED, t_max=0.5, n_iter=4)
    path = tmp_path / "terms.txt"
    k.export_terms(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) >= 4
    first_two = {tuple(line.split()) for line in lines[:2]}
    parsed = {(int(a), int(p), int(q)): float(c) for c, a, p, q in first_two}
    assert parsed[(1, 1, 0)] == pytest.approx(-KAP)
    assert parsed[(1, 0, 1)] == pytest.approx(KAP)
