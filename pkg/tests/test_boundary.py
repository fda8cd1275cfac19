from __future__ import annotations

import mpmath
import pytest
from mpmath import mp

from theta_lab.boundary import (
    WindowParams,
    choose_residue,
    f_b,
    lambda_N,
    lift_solution,
    limiting_jacobian,
    match_tau,
    phi_reduction,
    solve_progression,
    tail_E_r,
)
from theta_lab.core_eval import psi_eval, theta_jet, window_jet
from theta_lab.errors import HypothesisFailed, LeftWindow, NoMatchInWindow, NonConvergent


@pytest.fixture(autouse=True)
def _dps():
    with mp.workdps(40):
        yield


def test_tail_closed_form_for_b_one():
    for tau in (mpmath.pi, mpmath.mpc(2, 0.5), mpmath.mpf("0.7")):
        assert abs(tail_E_r(0, 1, 0, tau) - 1 / (1 + mpmath.exp(-tau))) < 1e-35
    assert abs(tail_E_r(0, 1, 0, mpmath.pi) - mpmath.mpf("0.958576167833637")) < 1e-14


def test_tail_matches_direct_sum():
    a, b, r, tau = 1, 4, 3, mpmath.mpc("0.8", "0.3")
    w = mpmath.expj(2 * mpmath.pi * a / b)
    direct = mpmath.fsum((-1) ** l * w ** (r * l + l * (l + 1) // 2) * mpmath.exp(-tau * l) for l in range(400))
    assert abs(tail_E_r(a, b, r, tau) - direct) < 1e-35
    val, der = tail_E_r(a, b, r, tau, with_derivative=True)
    assert abs(der - mpmath.diff(lambda t: tail_E_r(a, b, r, t), tau)) < 1e-25


def test_tail_needs_positive_real_part():
    with pytest.raises(NonConvergent):
        tail_E_r(0, 1, 0, 0)


def test_residue_choice():
    assert choose_residue(0, 1)[0] == 0
    r, vals = choose_residue(1, 2)
    assert r == 0 and abs(vals[0]) > abs(vals[1])
    with pytest.raises(ValueError):
        choose_residue(2, 4)


def test_window_params_validation():
    with pytest.raises(ValueError):
        WindowParams(1, 2, 41, 0)
    with pytest.raises(ValueError):
        WindowParams(2, 4, 40, 0)
    p = WindowParams(1, 2, 42, 0)
    assert p.parity_class == 2
    assert abs(p.omega + 1) < 1e-40


def test_rate_function_and_limit_jacobian():
    for b in (1, 2, 3):
        t0 = mpmath.pi / b
        assert abs(f_b(t0, b)) < 1e-35
        assert abs(mpmath.diff(lambda t: f_b(t, b), t0) + 1) < 1e-30
    (a11, a12), (a21, a22) = limiting_jacobian()
    assert abs(a11 * a22 - a12 * a21 + 1) < 1e-35
    p = WindowParams(0, 1, 10, 0)
    assert abs(p.mu0 + mpmath.exp(3 * mpmath.pi / 4) / mpmath.sqrt(2)) < 1e-35


def test_lambda_log_form_matches_direct_formula():
    p = WindowParams(1, 2, 12, 0)
    tau = mpmath.mpc("1.4", "0.1")
    q = p.q_of(tau)
    N = p.N
    direct = N * (-1) ** N * q ** (N * (N + 1) // 2) * tail_E_r(1, 2, 0, tau) / psi_eval(q)
    assert abs(lambda_N(p, tau) / direct - 1) < 1e-30
    with pytest.raises(LeftWindow):
        lambda_N(p, mpmath.mpf(5))


def test_matching_point_in_window():
    for N in (40, 80):
        p = WindowParams(0, 1, N, 0)
        tau = match_tau(p)
        assert abs(lambda_N(p, tau) - p.mu0) < 1e-25
        assert abs(tau - mpmath.pi) < 5 * mpmath.log(N) / N


def test_matching_window_too_small():
    with pytest.raises(NoMatchInWindow):
        match_tau(WindowParams(0, 1, 40, 0), C=0.01)


def test_lift_gives_double_zero_of_theta():
    p = WindowParams(0, 1, 24, 0)
    sol = lift_solution(p, tol=1e-20)
    assert abs(sol.q) < 1
    assert sol.residual_h < 1e-20 and sol.residual_hu < 1e-20
    assert sol.q.imag >= 0
    with mp.workdps(2 * sol.prec):
        q, N = sol.q, p.N
        x = -q ** (-N) * mpmath.exp(sol.u)
        jet = theta_jet(q, x)
        scale = mpmath.fsum(abs(q) ** (j * (j + 1) // 2) * abs(x) ** j for j in range(4 * N))
        assert abs(jet.value) < 1e-30 * scale
        assert abs(jet.dz * x) < 1e-30 * scale


def test_lift_real_solution_near_minus_one():
    sol = lift_solution(WindowParams(1, 2, 26, 0), tol=1e-20)
    assert sol.q.imag == 0 and sol.q.real < 0
    assert sol.dist_to_omega < 0.06


def test_progression_skips_wrong_residue():
    sols, fails = solve_progression(1, 2, [25], tol=1e-20)
    assert sols == [] and fails == [(25, "ResidueMismatch")]


def test_phi_first_order_small_q():
    with mp.workdps(50):
        q, N = mpmath.mpf("0.2"), 20
        jet = window_jet(q, 0, N)
        u, phi = phi_reduction(q, N)
        assert abs(window_jet(q, u, N).hu) < 1e-20
        u1 = -jet.hu / jet.huu
        assert abs(u - u1) < abs(u1) / 4


def test_phi_second_order_bounded_by_cubic_term():
    with mp.workdps(50):
        for q, N in ((mpmath.mpf("0.2"), 20), (mpmath.mpf("0.5"), 60)):
            jet = window_jet(q, 0, N)
            u, phi = phi_reduction(q, N)
            A, B, C = jet.h, jet.hu, jet.huu
            u1 = -B / C
            assert abs(phi - (A - B**2 / (2 * C))) <= abs(jet.huuu) * abs(u1) ** 3 / 6


def test_phi_vanishes_at_lifted_point():
    p = WindowParams(0, 1, 24, 0)
    sol = lift_solution(p, tol=1e-20)
    with mp.workdps(sol.prec):
        u, phi = phi_reduction(sol.q, p.N, c_floor=0)
        psi = psi_eval(sol.q)
        assert abs(u - sol.u) < 1e-15
        assert abs(phi) * p.N / abs(psi) < 1e-20


def test_phi_hypothesis_failure():
    with pytest.raises(HypothesisFailed):
        phi_reduction(mpmath.mpf("0.2"), 20, c_floor=1e10)
