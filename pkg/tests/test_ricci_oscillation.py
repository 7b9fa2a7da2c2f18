import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projcomplete.errors import DegenerateMoebius, SturmViolation
from projcomplete.geodesic_engine import RicciProfile
from projcomplete.ricci_oscillation import (
    CompletenessVerdict,
    VerdictOptions,
    bessel_comparison_derivative,
    bessel_comparison_solution,
    bessel_comparison_zeros,
    check_separation,
    completeness_verdict,
    compose,
    moebius,
    projective_parameter,
    solve_oscillation,
    verdicts_to_csv,
)

# first zero of sqrt(t) J_1(2 sqrt(t)), i.e. j_{1,1}^2 / 4, from mpmath at 30 digits
FIRST_ZERO_EPS1 = 3.67049266053097331430494444216


def _profile(q, t_span, n=2001):
    t = np.linspace(*t_span, n)
    return RicciProfile(t, np.asarray([q(s) for s in t], float))


# oscillation equation --------------------------------------------------------------------


def test_constant_q_zeros():
    sol = solve_oscillation(lambda t: 1.0, (0, 20))
    k = np.arange(6)
    assert np.allclose(sol.zeros0, np.pi / 2 + k * np.pi, atol=1e-10), f"{sol.zeros0}"
    assert np.allclose(sol.zeros1, np.arange(7) * np.pi, atol=1e-10), f"{sol.zeros1}"


def test_zero_q_has_one_zero():
    sol = solve_oscillation(lambda t: 0.0, (0, 10))
    assert sol.zero_counts() == (0, 1)
    assert np.allclose(sol.y1(np.array([2.0, 7.5])), [2.0, 7.5])


def test_inverse_t_matches_bessel():
    """q = 1/t: the solution through sqrt(t) J_1(2 sqrt(t)) has its zeros."""
    sol = solve_oscillation(lambda t: 1 / t, (1, 200))
    phi, dphi = bessel_comparison_solution(4, 1), bessel_comparison_derivative(4, 1)
    zeros = sol.combination_zeros(float(phi(1.0)), float(dphi(1.0)))
    predicted = bessel_comparison_zeros(4, 1, (1, 200))
    assert len(zeros) == len(predicted) > 5
    assert np.max(np.abs(zeros - predicted)) < 1e-6, f"{np.max(np.abs(zeros - predicted))}"


def test_wronskian_conserved():
    # slow modulation keeps clear of parametric resonance, so solutions stay bounded
    sol = solve_oscillation(lambda t: 2 + 0.3 * math.sin(0.3 * t), (0, 1000))
    t = np.linspace(0, 1000, 5001)
    drift = np.max(np.abs(sol.wronskian(t) - 1))
    assert drift < 1e-8, f"Wronskian drift {drift}"


def test_separation_checker_rejects_bad_zero_sets():
    check_separation(np.array([0.0, 2.0]), np.array([1.0, 3.0]))
    with pytest.raises(SturmViolation):
        check_separation(np.array([0.0, 1.0, 2.0]), np.array([3.0]))


q_mean = st.floats(0.2, 4)
q_wiggle = st.floats(0, 0.9)


@settings(max_examples=25, deadline=None)
@given(q_mean, q_wiggle, st.floats(0.1, 3))
def test_sturm_separation_and_comparison(a, b, w):
    """Zeros interlace, and a larger q never has fewer zeros (less one)."""
    small = solve_oscillation(lambda t: a * (1 + b * math.sin(w * t)), (0, 40))
    big = solve_oscillation(lambda t: a * (1 + b * math.sin(w * t)) + 0.5, (0, 40))
    check_separation(small.zeros0, small.zeros1)
    assert len(big.zeros1) >= len(small.zeros1) - 1
    assert len(big.zeros0) >= len(small.zeros0) - 1


# projective parameter -----------------------------------------------------------------------


def test_projective_parameter_examples():
    flat = solve_oscillation(lambda t: 0.0, (0, 10))
    u = projective_parameter(flat, 1, 0, 0, 1)
    assert u.winding == 0 and abs(u(4.0) - 4.0) < 1e-12
    shifted = projective_parameter(flat, 0, 1, 1, -3)
    assert shifted.winding == 1 and abs(shifted.poles[0] - 3.0) < 1e-12
    assert abs(shifted(5.0) - 0.5) < 1e-12
    circle = projective_parameter(solve_oscillation(lambda t: 1.0, (0, 10)), 1, 0, 0, 1)
    assert abs(circle(1.0) - math.tan(1.0)) < 1e-10
    assert circle.winding == 3 and np.allclose(circle.poles, np.pi / 2 + np.arange(3) * np.pi)
    with pytest.raises(DegenerateMoebius):
        projective_parameter(flat, 1, 2, 2, 4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3))
def test_winding_counts_poles(k):
    """q = k^2: u = y1/y0 has poles at (pi/2 + n pi)/k."""
    T = 15.0
    u = projective_parameter(solve_oscillation(lambda t: k * k, (0, T)), 1, 0, 0, 1)
    expected = (np.pi / 2 + np.pi * np.arange(100)) / k
    expected = expected[expected <= T]
    assert u.winding == len(expected)
    assert np.allclose(u.poles, expected, atol=1e-9)


mat = st.tuples(*[st.floats(-3, 3)] * 4).filter(lambda m: abs(m[0] * m[3] - m[1] * m[2]) > 0.1)


@settings(max_examples=40, deadline=None)
@given(mat, mat)
def test_moebius_composition(m1, m2):
    sol = solve_oscillation(lambda t: 1 + 0.3 * math.cos(t), (0, 5))
    u1 = projective_parameter(sol, *m1)
    u21 = projective_parameter(sol, *compose(m2, m1))
    for t in np.linspace(0.1, 4.9, 13):
        direct, chained = u21(t), moebius(m2, u1(t))
        if abs(direct) < 1e3 and abs(u1(t)) < 1e3:  # away from poles of either chart
            assert abs(direct - chained) <= 1e-12 * max(1.0, abs(direct))


# Bessel comparison ------------------------------------------------------------------------------


def test_bessel_examples():
    z = bessel_comparison_zeros(4, 2, (0.5, 30))
    assert np.allclose(np.diff(z), np.pi, atol=1e-12), "eps = 2, c = 4 is sin t"
    assert abs(bessel_comparison_zeros(4, 1, (0.1, 10))[0] - FIRST_ZERO_EPS1) < 1e-10


@pytest.mark.parametrize("c, eps", [(4, 2), (4, 1), (2.5, 0.5), (0.7, 1.5), (9, 0.25)])
def test_bessel_solves_comparison_equation(c, eps):
    """y'' + c / (4 t^(2 - eps)) y = 0, checked with a central difference of y'."""
    y, dy = bessel_comparison_solution(c, eps), bessel_comparison_derivative(c, eps)
    h = 1e-5
    for t in (0.7, 3.0, 11.0, 40.0):
        ypp = (dy(t + h) - dy(t - h)) / (2 * h)
        res = ypp + c / (4 * t ** (2 - eps)) * y(t)
        scale = abs(ypp) + abs(y(t)) * c / (4 * t ** (2 - eps))
        assert abs(res) < 1e-7 * max(scale, 1e-3), f"t={t}: residual {res}"


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from([0.5, 1.0, 2.0]))
def test_bessel_zero_count_monotone_in_c(c1, c2, eps):
    """Counted from the origin; a window starting later can lose early zeros as c grows."""
    lo, hi = sorted((c1, c2))
    n_lo = len(bessel_comparison_zeros(lo, eps, (0, 200)))
    n_hi = len(bessel_comparison_zeros(hi, eps, (0, 200)))
    assert n_hi >= n_lo


# verdicts ------------------------------------------------------------------------------------------


def test_verdict_examples():
    flat = completeness_verdict(_profile(lambda t: 0.0, (0, 60)), _profile(lambda t: 0.0, (0, 60)))
    assert flat.verdict == "incomplete"
    sphere = completeness_verdict(_profile(lambda t: 1.0, (0, 60)))
    assert sphere.verdict == "complete"
    assert (sphere.certificate.eps, sphere.certificate.c) == (2.0, pytest.approx(4.0))
    inv = completeness_verdict(_profile(lambda t: 1 / t, (1, 100)))
    assert inv.verdict == "complete" and inv.certificate.eps == 1.0
    assert inv.certificate.c == pytest.approx(4.0)


def test_undetermined_without_certificate():
    weak = _profile(lambda t: 0.1 * t ** -2.5, (1, 100))
    v = completeness_verdict(weak)
    assert v.verdict == "undetermined" and v.certificate is None
    forced = completeness_verdict(weak, options=VerdictOptions(assume_tail=True))
    assert forced.verdict == "complete", "assuming the tail accepts the decaying bound"


def test_complete_needs_certificate():
    with pytest.raises(ValueError):
        CompletenessVerdict("g", (0, 1), 3, 3, "complete", None)


def test_verdict_csv():
    v = completeness_verdict(_profile(lambda t: 1.0, (0, 60)), geodesic_id="s0")
    lines = verdicts_to_csv([v]).splitlines()
    assert lines[0] == "geodesic_id,t_start,t_end,zeros_forward,zeros_backward,certificate,c,eps,verdict"
    assert lines[1].startswith("s0,0,60,") and lines[1].endswith(",comparison,4,2,complete")
