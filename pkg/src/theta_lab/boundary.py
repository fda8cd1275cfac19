"""Spectral points near roots of unity from the moving-window equations.

With ``q = omega * exp(-tau/N)`` and ``u = v/N`` the pair
``H_N = d_u H_N = 0`` is solved in the normalized form
``F1 = N H_N / psi(q)``, ``F2 = d_u H_N / psi(q)``.  A first guess for
``tau`` comes from the one-variable matching ``lambda_N(tau) = mu0``, and
``v`` starts at ``3 pi / 4``.

``psi(q)`` is exponentially small in ``N`` on this window
(``log10 |psi| ~ -0.68 N / b`` at ``tau = pi/b``), and ``H_N`` is a sum of
terms of size one that cancels down to that level.  Every solve therefore
raises the working precision by ``-log10 |psi|`` plus a guard.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import mpmath
from mpmath import mp

from .core_eval import log_psi, window_jet
from .errors import Diverged, HypothesisFailed, LeftWindow, NoMatchInWindow, NonConvergent
from .precision import fmt, to_mpc, with_prec

BASE_DIGITS = 30
GUARD_DIGITS = 15
WINDOW_C = 5

__all__ = [
    "WindowParams",
    "BoundarySolution",
    "tail_E_r",
    "choose_residue",
    "lambda_N",
    "f_b",
    "match_tau",
    "lift_solution",
    "phi_reduction",
    "limiting_jacobian",
    "solve_progression",
]


@dataclass(frozen=True)
class WindowParams:
    a: int
    b: int
    N: int
    r: int

    def __post_init__(self):
        if self.b < 1 or math.gcd(self.a, self.b) != 1:
            raise ValueError("need b >= 1 and gcd(a, b) = 1")
        if not 0 <= self.r < self.b:
            raise ValueError("residue r must lie in [0, b)")
        if self.N % self.b != self.r:
            raise ValueError(f"N = {self.N} is not congruent to r = {self.r} mod {self.b}")

    @property
    def parity_class(self) -> int:
        return self.N % (2 * self.b)

    @property
    def omega(self) -> mpmath.mpc:
        return _omega_pow(self.a, self.b, 1)

    @property
    def tau0(self) -> mpmath.mpf:
        return mpmath.pi / self.b

    @property
    def v0(self) -> mpmath.mpf:
        return 3 * mpmath.pi / 4

    @property
    def mu0(self) -> mpmath.mpf:
        return -mpmath.exp(3 * mpmath.pi / 4) / mpmath.sqrt(2)

    def q_of(self, tau) -> mpmath.mpc:
        return self.omega * mpmath.exp(-to_mpc(tau) / self.N)


def _omega_pow(a: int, b: int, k: int) -> mpmath.mpc:
    # omega**k with the exponent reduced mod b first
    x = mpmath.mpf(2 * ((a * k) % b)) / b
    return mpmath.mpc(mpmath.cospi(x), mpmath.sinpi(x))


@dataclass(frozen=True)
class BoundarySolution:
    params: WindowParams
    tau: mpmath.mpc
    v: mpmath.mpc
    q: mpmath.mpc
    u: mpmath.mpc
    residual_h: mpmath.mpf
    residual_hu: mpmath.mpf
    dist_to_omega: mpmath.mpf
    prec: int
    iterations: int = 0

    def to_record(self, digits: int = 30) -> dict:
        p = self.params
        return {
            "a": p.a,
            "b": p.b,
            "r": p.r,
            "N": p.N,
            "tau_re": fmt(self.tau.real, digits),
            "tau_im": fmt(self.tau.imag, digits),
            "v_re": fmt(self.v.real, digits),
            "v_im": fmt(self.v.imag, digits),
            "q_re": fmt(self.q.real, digits),
            "q_im": fmt(self.q.imag, digits),
            "abs_q": fmt(abs(self.q), digits),
            "dist_to_omega": fmt(self.dist_to_omega, digits),
            "residual_h": fmt(self.residual_h, 6),
            "residual_hu": fmt(self.residual_hu, 6),
        }


def f_b(tau, b: int):
    """Exponential rate ``pi**2/(2 b**2 tau) - tau/2``; vanishes at ``pi/b`` with slope -1."""
    return mpmath.pi**2 / (2 * b**2 * tau) - tau / 2


def tail_E_r(a: int, b: int, r: int, tau, tol=None, with_derivative: bool = False):
    """``E_r(tau) = sum_l (-1)**l omega**(r l + l(l+1)/2) e**(-tau l)``.

    Stops once ``e**(-(L+1) Re tau) / (1 - e**(-Re tau))`` (times ``L+1`` for
    the derivative) is below ``tol``.
    """
    tau = to_mpc(tau)
    if tau.real <= 0:
        raise NonConvergent("E_r needs Re tau > 0")
    tol = mpmath.mpf(10) ** (-mp.dps) if tol is None else mpmath.mpf(tol)
    x = mpmath.exp(-tau.real)
    w = mpmath.exp(-tau)
    total = mpmath.mpc(0)
    deriv = mpmath.mpc(0)
    wl = mpmath.mpc(1)
    ell = 0
    while True:
        k = r * ell + ell * (ell + 1) // 2
        term = _omega_pow(a, b, k) * wl
        if ell % 2:
            term = -term
        total += term
        deriv -= ell * term
        bound = x ** (ell + 1) / (1 - x) * (ell + 2 if with_derivative else 1)
        if bound <= tol:
            break
        wl *= w
        ell += 1
    return (total, deriv) if with_derivative else total


def choose_residue(a: int, b: int) -> tuple[int, dict]:
    """Residue class maximizing ``|E_r(pi/b)|``; also returns every value."""
    if b < 1 or math.gcd(a, b) != 1:
        raise ValueError("need gcd(a, b) = 1")
    tau0 = mpmath.pi / b
    vals = {r: tail_E_r(a, b, r, tau0) for r in range(b)}
    best = max(range(b), key=lambda r: (abs(vals[r]), -r))
    return best, vals


def _log_prefactor(p: WindowParams, tau):
    """``log(N (-1)**N q**(N(N+1)/2))`` on the branch that is linear in ``tau``."""
    N = p.N
    k = N * (N + 1) // 2
    phase = mpmath.pi * N + 2 * mpmath.pi * ((p.a * k) % p.b) / p.b
    return mpmath.log(N) + mpmath.mpc(0, 1) * phase - tau * (N + 1) / 2


def _log_lambda(p: WindowParams, tau):
    """``log lambda_N`` and its ``tau``-derivative."""
    tau = to_mpc(tau)
    q = p.q_of(tau)
    lpsi, dlpsi = log_psi(q)
    E, dE = tail_E_r(p.a, p.b, p.r, tau, with_derivative=True)
    val = _log_prefactor(p, tau) - lpsi + mpmath.log(E)
    dq = -q / p.N
    der = -mpmath.mpf(p.N + 1) / 2 - dlpsi * dq + dE / E
    return val, der


def _check_window(p: WindowParams, tau):
    t0 = p.tau0
    if not (t0 / 2 <= mpmath.re(tau) <= 2 * t0):
        raise LeftWindow(f"Re tau = {mpmath.nstr(mpmath.re(tau), 6)} is outside [tau0/2, 2 tau0]")


@with_prec
def lambda_N(p: WindowParams, tau) -> mpmath.mpc:
    """``lambda_N(tau) = N (-1)**N q**(N(N+1)/2) E_r(tau) / psi(q)``, evaluated through logarithms."""
    _check_window(p, tau)
    return mpmath.exp(_log_lambda(p, tau)[0])


@with_prec
def match_tau(p: WindowParams, tol=None, C: float = WINDOW_C, max_iter: int = 60) -> mpmath.mpc:
    """Solve ``lambda_N(tau) = mu0`` by Newton on the logarithm, starting at ``pi/b``.

    The branch of ``log mu0`` is the one nearest to ``log lambda_N(pi/b)``.
    """
    tol = mpmath.mpf(10) ** (-(mp.dps - 10)) if tol is None else mpmath.mpf(tol)
    mu0 = p.mu0
    tau = mpmath.mpc(p.tau0)
    g0, _ = _log_lambda(p, tau)
    log_mu = mpmath.log(mu0)
    k = mpmath.nint((g0.imag - log_mu.imag) / (2 * mpmath.pi))
    target = log_mu + 2j * mpmath.pi * k
    radius = C * mpmath.log(p.N) / p.N
    for _ in range(max_iter):
        g, dg = _log_lambda(p, tau)
        step = (g - target) / dg
        tau = tau - step
        if abs(tau - p.tau0) > radius or tau.real <= 0:
            raise NoMatchInWindow(f"matching left |tau - tau0| <= {mpmath.nstr(radius, 4)} (N = {p.N})")
        if abs(step) <= tol * 1e-3:
            break
    else:
        raise NoMatchInWindow("matching Newton did not converge")
    lam = mpmath.exp(_log_lambda(p, tau)[0])
    if abs(lam - mu0) > tol * abs(mu0):
        raise NoMatchInWindow("matching residual above tolerance")
    return tau


def working_digits(p: WindowParams, base: int = BASE_DIGITS, guard: int = GUARD_DIGITS) -> int:
    """Digits needed to resolve ``H_N`` relative to ``psi`` near ``tau = pi/b``."""
    loss = math.pi**2 * p.N / (2 * p.b**2 * math.pi / p.b) / math.log(10)
    return int(base + loss + guard + math.log10(p.N + 1))


def _normalized(p: WindowParams, tau, v, need_jac: bool = True):
    """``(F1, F2)`` and, optionally, their Jacobian in ``(tau, v)``."""
    N = p.N
    q = p.q_of(tau)
    u = v / N
    lpsi, dlpsi = log_psi(q)
    psi = mpmath.exp(lpsi)
    jet = window_jet(q, u, N)
    F1 = N * jet.h / psi
    F2 = jet.hu / psi
    if not need_jac:
        return F1, F2, None
    q_tau = -q / N
    dF1_dtau = q_tau * (N * jet.hq / psi - F1 * dlpsi)
    dF2_dtau = q_tau * (jet.hqu / psi - F2 * dlpsi)
    dF1_dv = jet.hu / psi
    dF2_dv = jet.huu / (N * psi)
    return F1, F2, ((dF1_dtau, dF1_dv), (dF2_dtau, dF2_dv))


def limiting_jacobian(v0=None, mu0=None):
    """Jacobian of ``(sin v + mu0 e**(-xi-v), cos v - mu0 e**(-xi-v))`` at ``(0, v0)``."""
    v0 = 3 * mpmath.pi / 4 if v0 is None else v0
    mu0 = -mpmath.exp(v0) * mpmath.sin(v0) if mu0 is None else mu0
    e = mu0 * mpmath.exp(-v0)
    return ((-e, mpmath.cos(v0) - e), (e, -mpmath.sin(v0) + e))


def _canonical_real_omega(p: WindowParams, tau, v, F1, F2, tol):
    # For real omega the system is conjugation symmetric: report the member
    # with Im q >= 0, and put solutions that are real up to noise on the axis.
    small = mpmath.mpf(10) ** (-(mp.dps // 2))
    if abs(tau.imag) <= small and abs(v.imag) <= small:
        tr, vr = mpmath.mpc(tau.real), mpmath.mpc(v.real)
        G1, G2, _ = _normalized(p, tr, vr, need_jac=False)
        if max(abs(G1), abs(G2)) <= max(tol, max(abs(F1), abs(F2))):
            return tr, vr, G1, G2
    if p.q_of(tau).imag < 0:
        return mpmath.conj(tau), mpmath.conj(v), mpmath.conj(F1), mpmath.conj(F2)
    return tau, v, F1, F2


def lift_solution(p: WindowParams, tol=1e-20, C: float = WINDOW_C, max_iter: int = 60,
                  prec: int | None = None, validate: bool = True) -> BoundarySolution:
    """Two-variable damped Newton for ``F1 = F2 = 0`` from ``(tau*, 3 pi/4)``.

    The working precision is at least :func:`working_digits`.  With
    ``validate`` the residuals are recomputed at twice that precision and
    must stay within ``10 * tol``.
    """
    tol = mpmath.mpf(tol)
    dps = max(prec or mp.dps, working_digits(p))
    with mp.workdps(dps):
        tau_star = match_tau(p, C=C)
        tau = mpmath.mpc(tau_star)
        v = mpmath.mpc(p.v0)
        radius = C * mpmath.log(p.N) / p.N
        F1, F2, J = _normalized(p, tau, v)
        res = max(abs(F1), abs(F2))
        it = 0
        while res > tol * mpmath.mpf("1e-3"):
            if it >= max_iter:
                raise Diverged(f"lift did not converge for N = {p.N} (residual {mpmath.nstr(res, 3)})")
            (a11, a12), (a21, a22) = J
            det = a11 * a22 - a12 * a21
            if det == 0:
                raise Diverged("singular Jacobian in the lift")
            dt = (F1 * a22 - F2 * a12) / det
            dv = (a11 * F2 - a21 * F1) / det
            lam = mpmath.mpf(1)
            while True:
                tn, vn = tau - lam * dt, v - lam * dv
                if abs(tn - p.tau0) <= 2 * radius and tn.real > 0:
                    G1, G2, Jn = _normalized(p, tn, vn)
                    rn = max(abs(G1), abs(G2))
                    if rn < res:
                        break
                lam /= 2
                if lam < mpmath.mpf(2) ** -20:
                    if res <= tol:
                        break
                    raise LeftWindow(f"lift cannot reduce the residual inside the window (N = {p.N})")
            if lam < mpmath.mpf(2) ** -20:
                break
            tau, v, F1, F2, J, res = tn, vn, G1, G2, Jn, rn
            it += 1
        if res > tol or tau.real <= 0:
            raise Diverged(f"lift residual {mpmath.nstr(res, 3)} above tolerance")
        if p.b <= 2:
            tau, v, F1, F2 = _canonical_real_omega(p, tau, v, F1, F2, tol)
        q = p.q_of(tau)
        u = v / p.N
        sol = BoundarySolution(p, tau, v, q, u, abs(F1), abs(F2), abs(q - p.omega), dps, it)
    if validate:
        with mp.workdps(2 * dps):
            G1, G2, _ = _normalized(p, tau, v, need_jac=False)
            if max(abs(G1), abs(G2)) > 10 * tol:
                raise Diverged("residuals do not survive re-evaluation at doubled precision")
    return sol


def solve_progression(a: int, b: int, Ns, tol=1e-20, C: float = WINDOW_C):
    """Lift at each ``N``; ``N`` values outside the chosen residue class are skipped.

    Returns ``(solutions, failures)`` where failures pairs each ``N`` with
    the error name.
    """
    r, _ = choose_residue(a, b)
    sols, fails = [], []
    for N in Ns:
        if N % b != r:
            fails.append((N, "ResidueMismatch"))
            continue
        try:
            sols.append(lift_solution(WindowParams(a, b, N, r), tol=tol, C=C))
        except (NoMatchInWindow, LeftWindow, Diverged) as exc:
            fails.append((N, type(exc).__name__))
    return sols, fails


@with_prec
def phi_reduction(q, N: int, tol=None, c_floor=None, ratio_cap=1, max_iter: int = 60):
    """Critical point ``u_N(q)`` of ``H_N(q, .)`` near 0 and the critical value ``Phi``.

    Hypotheses checked: ``|d_u^2 H_N(q,0)| > c_floor`` and
    ``|d_u H_N(q,0)| <= ratio_cap * |d_u^2 H_N(q,0)|``, i.e. the first Newton
    step from ``u = 0`` has length at most ``ratio_cap``.
    """
    q = to_mpc(q)
    tol = mpmath.mpf(10) ** (-(mp.dps // 2)) if tol is None else mpmath.mpf(tol)
    c_floor = mpmath.mpf(10) ** (-(mp.dps // 2)) if c_floor is None else mpmath.mpf(c_floor)
    jet0 = window_jet(q, 0, N)
    if abs(jet0.huu) <= c_floor:
        raise HypothesisFailed("second u-derivative at 0 is too small")
    if abs(jet0.hu) > ratio_cap * abs(jet0.huu):
        raise HypothesisFailed("first u-derivative at 0 is not small against the second")
    u = mpmath.mpc(0)
    for _ in range(max_iter):
        jet = window_jet(q, u, N)
        step = jet.hu / jet.huu
        u -= step
        if abs(step) <= tol:
            break
    else:
        raise HypothesisFailed("critical-point Newton did not converge")
    jet = window_jet(q, u, N)
    u -= jet.hu / jet.huu
    return u, window_jet(q, u, N).h


def solutions_to_json(sols, digits: int = 30) -> str:
    return json.dumps([s.to_record(digits) for s in sols], indent=2) + "\n"
