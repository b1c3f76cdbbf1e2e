"""Acceptance suite: runs every criterion at its stated tolerance and prints
one PASS/FAIL line per criterion.

Criteria 9 and 10 assert a terminal-decay gate (5% of the initial norm at
T - 0.05) that the implemented control law cannot reach: the target
dynamics shed amplitude only adiabatically (the state norm scales like
sqrt((T-t)/T), about 12.9% at the stop time) because the gain term is
conservative, and the time-varying kernel develops a finite-time blow-up
along c(T-t) = sqrt(x^2-y^2) that forces a gain freeze before the stop
time.  Those two tests are therefore expected to fail and are kept
faithful rather than loosened; docs/notes hold the full analysis.
"""
import pytest

from ptstring.verification import (VerificationContext, criterion_1_minimal_time,
                                   criterion_2_kernel_diagonal,
                                   criterion_3_oracle_agreement,
                                   criterion_4_theorem2_bound,
                                   criterion_5_bessel, criterion_6_lemma2,
                                   criterion_7_gain_derivatives,
                                   criterion_8_open_loop_energy,
                                   criterion_9_closed_loop_decay,
                                   criterion_10_initial_condition_sweep,
                                   criterion_11_transform_round_trip,
                                   criterion_12_inequalities,
                                   criterion_13_bounded_control)


@pytest.fixture(scope="session")
def ctx():
    return VerificationContext()


def _check(result):
    print(result.line())
    assert result.passed, result.detail


def test_criterion_01_minimal_time(ctx):
    _check(criterion_1_minimal_time(ctx))


def test_criterion_02_kernel_diagonal(ctx):
    _check(criterion_2_kernel_diagonal(ctx))


def test_criterion_03_oracle_agreement(ctx):
    _check(criterion_3_oracle_agreement(ctx))


def test_criterion_04_theorem2_bound(ctx):
    _check(criterion_4_theorem2_bound(ctx))


def test_criterion_05_bessel(ctx):
    _check(criterion_5_bessel(ctx))


def test_criterion_06_lemma2_identities(ctx):
    _check(criterion_6_lemma2(ctx))


def test_criterion_07_gain_derivatives(ctx):
    _check(criterion_7_gain_derivatives(ctx))


def test_criterion_08_open_loop_conservation(ctx):
    _check(criterion_8_open_loop_energy(ctx))


def test_criterion_09_closed_loop_decay(ctx):
    # expected to fail: the reachable terminal ratio is the adiabatic floor
    # (~0.13), not 0.05; see the module docstring
    _check(criterion_9_closed_loop_decay(ctx))


def test_criterion_10_initial_condition_sweep(ctx):
    # expected to fail with criterion 9 (same gate, three initial shapes)
    _check(criterion_10_initial_condition_sweep(ctx))


def test_criterion_11_transform_round_trip(ctx):
    _check(criterion_11_transform_round_trip(ctx))


def test_criterion_12_functional_inequalities(ctx):
    _check(criterion_12_inequalities(ctx))


def test_criterion_13_bounded_control(ctx):
    _check(criterion_13_bounded_control(ctx))
