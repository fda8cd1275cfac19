from __future__ import annotations

import mpmath
import pytest
from mpmath import mp

from theta_lab.core_eval import (
    log_psi,
    psi_eval,
    theta_jet,
    theta_value,
    window_identity_residual,
    window_jet,
)
from theta_lab.errors import NonConvergent, ScaleOverflow, ToleranceUnreachable
from theta_lab.precision import parse_complex


@pytest.fixture(autouse=True)
def _dps():
    with mp.workdps(50):
        yield


def brute_theta(q, z, terms=400):
    q, z = mpmath.mpc(q), mpmath.mpc(z)
    return mpmath.fsum(q ** (j * (j + 1) // 2) * z**j for j in range(terms))


def test_theta_at_q_zero_is_one():
    assert theta_value(0, 5) == 1
    jet = theta_jet(0, 5)
    assert jet.dz == 0 and jet.dq == 5


def test_theta_at_z_zero_is_one():
    assert theta_value(mpmath.mpf("0.7"), 0) == 1


@pytest.mark.parametrize("q,z", [("0.3", "-7.5"), ("0.5+0.2j", "3-4j"), ("-0.8", "2.5"), ("0.95j", "1")])
def test_theta_matches_direct_sum(q, z):
    q, z = parse_complex(q), parse_complex(z)
    jet = theta_jet(q, z)
    ref = brute_theta(q, z, terms=600)
    assert abs(jet.value - ref) <= 10 * jet.tail_bound + mpmath.mpf(10) ** -45 * max(1, abs(ref))


def test_theta_derivatives_match_numerical_differentiation():
    q, z = mpmath.mpc("0.41", "0.13"), mpmath.mpc("-3.2", "1.1")
    jet = theta_jet(q, z)
    f = lambda qq, zz: brute_theta(qq, zz, 200)
    assert abs(jet.dz - mpmath.diff(lambda t: f(q, t), z)) < 1e-30
    assert abs(jet.dq - mpmath.diff(lambda t: f(t, z), q)) < 1e-30
    assert abs(jet.dzz - mpmath.diff(lambda t: f(q, t), z, 2)) < 1e-25
    dqz = mpmath.diff(lambda t: mpmath.diff(lambda s: f(t, s), z), q)
    assert abs(jet.dqz - dqz) < 1e-20


def test_tail_bound_respects_tolerance():
    jet = theta_jet("0.6", "10", tol="1e-20")
    assert jet.tail_bound <= mpmath.mpf("1e-20")
    ref = brute_theta("0.6", "10", 400)
    assert abs(jet.value - ref) <= 2 * mpmath.mpf("1e-20")


def test_theta_outside_disk_raises():
    with pytest.raises(NonConvergent):
        theta_jet(1, 1)
    with pytest.raises(NonConvergent):
        theta_jet(mpmath.mpc(0.8, 0.7), 1)


def test_theta_term_cap():
    with pytest.raises(ToleranceUnreachable):
        theta_jet("0.999", "1", max_terms=20)


@pytest.mark.parametrize("q", ["0.3333333333", "0.5", "-0.7", "0.3+0.6j", "0.9"])
def test_psi_series_product_and_qpochhammer_agree(q):
    q = parse_complex(q)
    tol = mpmath.mpf(10) ** -45
    s = psi_eval(q, tol=tol, mode="series")
    p = psi_eval(q, tol=tol, mode="product")
    ref = mpmath.qp(q) ** 3
    assert abs(s - p) <= 2 * tol
    assert abs(s - ref) <= 2 * tol


def test_psi_unknown_mode():
    with pytest.raises(ValueError):
        psi_eval(0.1, mode="other")


def test_log_psi_is_log_of_psi_and_derivative():
    q = mpmath.mpc("0.62", "-0.31")
    lp, dlp = log_psi(q)
    assert abs(mpmath.exp(lp) - mpmath.qp(q) ** 3) < 1e-45
    num = mpmath.diff(lambda t: 3 * mpmath.log(mpmath.qp(t)), q)
    assert abs(dlp - num) < 1e-35


def test_log_psi_is_continuous_near_the_boundary():
    # principal log of the product would jump; the termwise log does not
    qs = [0.97 * mpmath.expj(t) for t in mpmath.linspace(0.5, 1.0, 21)]
    vals = [log_psi(q)[0] for q in qs]
    steps = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert max(steps) < 5


def test_window_hu_at_zero_is_psi():
    # bilateral sum: d_u H(q, 0) equals the eta-cubed product
    jet = window_jet("0.5", 0, 60)
    assert abs(jet.hu - psi_eval("0.5")) < 1e-30
    assert abs(jet.h) < 1e-30
    # and the second derivative is its negative (symmetry s -> -1-s)
    assert abs(jet.huu + jet.hu) < 1e-30


def test_window_derivatives_match_numerical_differentiation():
    q, u, N = mpmath.mpc("0.45", "0.2"), mpmath.mpc("0.3", "-0.4"), 7
    jet = window_jet(q, u, N)
    h = lambda qq, uu: window_jet(qq, uu, N).h
    assert abs(jet.hu - mpmath.diff(lambda t: h(q, t), u)) < 1e-30
    assert abs(jet.huu - mpmath.diff(lambda t: h(q, t), u, 2)) < 1e-25
    assert abs(jet.huuu - mpmath.diff(lambda t: h(q, t), u, 3)) < 1e-20
    assert abs(jet.hq - mpmath.diff(lambda t: h(t, u), q)) < 1e-30
    hqu = mpmath.diff(lambda t: window_jet(t, u, N).hu, q)
    assert abs(jet.hqu - hqu) < 1e-25


def test_window_partial_jet_agrees_with_full():
    full = window_jet("0.6", "0.1+0.2j", 12)
    part = window_jet("0.6", "0.1+0.2j", 12, full=False)
    assert part.h == full.h and part.hu == full.hu and part.hq == full.hq
    assert part.huu == 0


@pytest.mark.parametrize("q,u,N", [("0.5", "0.2", 4), ("0.3+0.3j", "-0.1+0.5j", 6), ("-0.6", "0", 10)])
def test_window_identity(q, u, N):
    res = window_identity_residual(parse_complex(q), parse_complex(u), N, tol=1e-35)
    assert res < 1e-34


def test_window_identity_scale_overflow():
    with pytest.raises(ScaleOverflow):
        window_identity_residual("0.01", 0, 12, tol=1e-40)


def test_window_negative_N():
    with pytest.raises(ValueError):
        window_jet(0.5, 0, -1)
