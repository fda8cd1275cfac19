"""Evaluation of the partial theta function and its moving-window form.

All sums are cut off with an explicit, provable tail bound.  Once the ratio
of consecutive terms drops below 1/2 and stays there, the omitted tail is at
most twice the first omitted term.  The ratio of the base terms
``q**(j(j+1)/2) * z**j`` is ``|q|**(j+1) * |z|``, which is decreasing in
``j``.  Polynomial weights up to cubic degree multiply it by at most
``((J+2)/J)**3`` once ``j > J >= 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import mpmath
from mpmath import mp

from .errors import NonConvergent, PrecisionExhausted, ScaleOverflow, ToleranceUnreachable
from .precision import eps_digits, to_mpc, with_prec

DEFAULT_TERM_CAP = 1_000_000

__all__ = [
    "ThetaJet",
    "WindowJet",
    "theta_jet",
    "theta_value",
    "psi_eval",
    "log_psi",
    "window_jet",
    "window_identity_residual",
]


@dataclass(frozen=True)
class ThetaJet:
    value: mpmath.mpc
    dz: mpmath.mpc
    dq: mpmath.mpc
    dzz: mpmath.mpc
    dqz: mpmath.mpc
    terms_used: int
    tail_bound: mpmath.mpf

    def residual(self) -> mpmath.mpf:
        return max(abs(self.value), abs(self.dz))


@dataclass(frozen=True)
class WindowJet:
    """``H_N`` and its derivatives at one point ``(q, u)``.

    ``h`` and ``hu`` are the moving-window function and its ``u``-derivative.
    The higher ``u``-derivatives and the ``q``-derivatives are produced by the
    same pass and feed the two-variable solvers.
    """

    h: mpmath.mpc
    hu: mpmath.mpc
    huu: mpmath.mpc
    huuu: mpmath.mpc
    hq: mpmath.mpc
    hqu: mpmath.mpc
    N: int
    terms_used: int
    tail_bound: mpmath.mpf


def _check_disk(q):
    if abs(q) >= 1:
        raise NonConvergent(f"|q| = {mpmath.nstr(abs(q), 8)} is outside the unit disk")


def _weight_ratio(J: int) -> mpmath.mpf:
    # bound on w(j+1)/w(j) for j > J, any weight of degree <= 3 in j
    return (mpmath.mpf(J + 2) / J) ** 3


@with_prec
def theta_jet(q, z, tol=None, max_terms: int = DEFAULT_TERM_CAP) -> ThetaJet:
    """Theta, its z- and q-derivatives and the two mixed second derivatives.

    All five series share one cutoff ``J`` and ``tail_bound`` covers each of
    them.
    """
    q = to_mpc(q)
    z = to_mpc(z)
    _check_disk(q)
    tol = eps_digits() if tol is None else mpmath.mpf(tol)
    aq, az = abs(q), abs(z)

    value = dz = dq = dzz = dqz = mpmath.mpc(0)
    qe = mpmath.mpc(1)  # q**e_j
    qem1 = mpmath.mpc(1)  # q**(e_j - 1), used for j >= 1
    qj = mpmath.mpc(1)  # q**j
    zp = [mpmath.mpc(1)]  # z**0, z**1, ...
    mag = mpmath.mpf(1)  # |q|**e_j * |z|**j
    aq_pow = mpmath.mpf(1)  # |q|**(j+1) after the update below
    j = 0
    while True:
        e = j * (j + 1) // 2
        zj = zp[j]
        value += qe * zj
        if j >= 1:
            zjm1 = zp[j - 1]
            dz += j * qe * zjm1
            dq += e * qem1 * zj
            dqz += (j * e) * qem1 * zjm1
        if j >= 2:
            dzz += (j * (j - 1)) * qe * zp[j - 2]

        # advance to j + 1
        qem1 = qe * qj
        qj = qj * q
        qe = qem1 * q
        zp.append(zp[-1] * z)
        aq_pow = aq_pow * aq
        mag = mag * aq_pow * az  # |t_{j+1}|

        if j >= 1:
            J = j
            rho = aq_pow * aq * az  # |q|**(J+2)|z| bounds every later base ratio
            if rho * _weight_ratio(J) <= mpmath.mpf(1) / 2:
                tail = _theta_tail(J + 1, mag, aq, az)
                if tail <= tol:
                    return ThetaJet(value, dz, dq, dzz, dqz, J + 1, tail)
        j += 1
        if j > max_terms:
            raise ToleranceUnreachable(f"theta series needs more than {max_terms} terms")


def _theta_tail(j, mag, aq, az):
    """Twice the largest first omitted term over the five series."""
    e = j * (j + 1) // 2
    if az == 0:
        # only the z**(j-2) series of the second derivative can survive
        return 2 * j * (j - 1) * aq**e if j == 2 else mpmath.mpf(0)
    bounds = [mag, j * mag / az, j * (j - 1) * mag / (az * az)]
    if aq != 0:
        bounds.append(e * mag / aq)
        bounds.append(j * e * mag / (aq * az))
    return 2 * max(bounds)


def theta_value(q, z, tol=None, prec=None):
    return theta_jet(q, z, tol=tol, prec=prec).value


@with_prec
def psi_eval(q, tol=None, mode: str = "series", max_terms: int = DEFAULT_TERM_CAP):
    """Eta-cubed function ``psi(q) = prod (1 - q**nu)**3``.

    ``mode="series"`` sums the lacunary series with odd-integer weights;
    ``mode="product"`` multiplies the Jacobi product.  The two routes are
    independent and are cross-checked in the tests.
    """
    q = to_mpc(q)
    _check_disk(q)
    tol = eps_digits() if tol is None else mpmath.mpf(tol)
    aq = abs(q)
    if mode == "series":
        total = mpmath.mpc(0)
        qe = mpmath.mpc(1)
        qk = mpmath.mpc(1)
        k = 0
        while True:
            term = (2 * k + 1) * qe
            total += term if k % 2 == 0 else -term
            qk = qk * q  # q**(k+1)
            qe = qe * qk  # q**e_{k+1}
            if k >= 1:
                ratio = aq ** (k + 2) * mpmath.mpf(2 * k + 5) / (2 * k + 3)
                if ratio <= mpmath.mpf(1) / 2 and 2 * (2 * k + 3) * abs(qe) <= tol:
                    return total
            k += 1
            if k > max_terms:
                raise ToleranceUnreachable("psi series exceeded the term cap")
    if mode == "product":
        if q == 0:
            return mpmath.mpc(1)
        prod = mpmath.mpc(1)
        qn = mpmath.mpc(1)
        aqn = mpmath.mpf(1)
        one_minus = 1 - aq
        for nu in range(1, max_terms + 1):
            qn = qn * q
            aqn = aqn * aq
            f = 1 - qn
            prod = prod * f * f * f
            nxt = aqn * aq
            delta = 3 * nxt / (one_minus * (1 - nxt))
            if abs(prod) * mpmath.expm1(delta) <= tol:
                return prod
        raise ToleranceUnreachable("psi product exceeded the term cap")
    raise ValueError(f"unknown psi mode {mode!r}")


@with_prec
def log_psi(q, rel_tol=None, max_terms: int = 10_000_000):
    """Holomorphic logarithm ``3 * sum log(1 - q**nu)`` with relative error ``rel_tol``.

    Every factor ``1 - q**nu`` has positive real part inside the disk, so the
    principal logarithm of each factor gives a branch analytic in ``q``.
    Returns ``(log_psi, dlog_psi_dq)``.
    """
    q = to_mpc(q)
    _check_disk(q)
    rel_tol = eps_digits() if rel_tol is None else mpmath.mpf(rel_tol)
    aq = abs(q)
    total = mpmath.mpc(0)
    deriv = mpmath.mpc(0)
    qn = mpmath.mpc(1)
    aqn = mpmath.mpf(1)
    for nu in range(1, max_terms + 1):
        qnm1 = qn
        qn = qn * q
        aqn = aqn * aq
        f = 1 - qn
        total += mpmath.log(f)
        deriv -= nu * qnm1 / f
        nxt = aqn * aq
        # |log(1-w)| <= |w|/(1-|w|); sum nu x**(nu-1) over nu > V is <= (V+1) x**V/(1-x)**2
        rem = nxt / ((1 - aq) * (1 - nxt))
        rem_d = (nu + 1) * aqn / ((1 - aq) ** 2 * (1 - nxt))
        if 3 * rem <= rel_tol and 3 * rem_d <= rel_tol * max(1, abs(3 * deriv)):
            return 3 * total, 3 * deriv
    raise PrecisionExhausted("log psi product exceeded the term cap")


@with_prec
def window_jet(q, u, N: int, tol=None, max_terms: int = DEFAULT_TERM_CAP, full: bool = True) -> WindowJet:
    """Moving-window function ``H_N(q, u) = sum_{s >= -N} (-1)**s q**(s(s+1)/2) e**(s u)``.

    With ``full=False`` only ``h``, ``hu`` and ``hq`` are accumulated (the
    other fields are zero); path tracking needs no more.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    q = to_mpc(q)
    u = to_mpc(u)
    _check_disk(q)
    tol = eps_digits() if tol is None else mpmath.mpf(tol)
    aq = abs(q)
    E = mpmath.exp(u)
    aE = abs(E)
    acc = [mpmath.mpc(0)] * 6  # h, hu, huu, huuu, hq, hqu
    terms = 0

    def add(s, sign, qe, qem1, Ep, e):
        t = qe * Ep
        if sign < 0:
            t = -t
        acc[0] += t
        if s:
            st = s * t
            acc[1] += st
            if full:
                acc[2] += s * st
                acc[3] += (s * s) * st
        if e:
            tq = (e * qem1) * Ep
            if sign < 0:
                tq = -tq
            acc[4] += tq
            if full:
                acc[5] += s * tq

    # s = 0, 1, 2, ...
    qe = mpmath.mpc(1)
    qem1 = mpmath.mpc(1)
    qs = mpmath.mpc(1)
    Ep = mpmath.mpc(1)
    mag = mpmath.mpf(1)
    aq_pow = mpmath.mpf(1)
    tail_up = None
    s = 0
    while True:
        e = s * (s + 1) // 2
        add(s, 1 if s % 2 == 0 else -1, qe, qem1, Ep, e)
        terms += 1
        qem1 = qe * qs  # q**(e_{s+1} - 1)
        qs = qs * q
        qe = qem1 * q
        Ep = Ep * E
        aq_pow = aq_pow * aq
        mag = mag * aq_pow * aE
        if s >= 1:
            rho = aq_pow * aq * aE
            if rho * _weight_ratio(s) <= mpmath.mpf(1) / 2:
                tail_up = _window_tail(s + 1, mag, aq)
                if tail_up <= tol / 2:
                    break
        s += 1
        if s > max_terms:
            raise ToleranceUnreachable(f"window series needs more than {max_terms} terms")

    # s = -1, -2, ..., -N
    tail_down = mpmath.mpf(0)
    if N >= 1:
        Einv = 1 / E
        aEinv = 1 / aE
        qe = mpmath.mpc(1)  # e_{-1} = 0
        qem1 = mpmath.mpc(1)
        qk = mpmath.mpc(1)
        Ep = Einv
        mag = aEinv
        aq_pow = mpmath.mpf(1)
        for s in range(-1, -N - 1, -1):
            e = s * (s + 1) // 2
            add(s, 1 if s % 2 == 0 else -1, qe, qem1, Ep, e)
            terms += 1
            if s == -N:
                break
            # e_{s-1} = e_s - s
            qem1 = qe * qk  # q**(e_s + |s| - 1), with qk = q**(|s|-1)
            qk = qk * q
            qe = qem1 * q
            Ep = Ep * Einv
            aq_pow = aq_pow * aq  # |q|**|s|
            mag = mag * aq_pow * aEinv
            k = -s  # the next omitted index has |s'| = k + 1
            if k >= 1:
                rho = aq_pow * aq * aEinv
                if rho * _weight_ratio(k) <= mpmath.mpf(1) / 2:
                    t = _window_tail(k + 1, mag, aq)
                    if t <= tol / 2:
                        tail_down = t
                        break
    return WindowJet(*acc, N=N, terms_used=terms, tail_bound=tail_up + tail_down)


def _window_tail(k, mag, aq):
    e = k * (k + 1) // 2
    bounds = [mag * k**3]
    if aq != 0:
        bounds.append(k * e * mag / aq)
    return 2 * max(bounds)


@with_prec
def window_identity_residual(q, u, N: int, tol=None):
    """``|Theta(q, -q**-N e**u) - (-1)**N q**(-N(N-1)/2) e**(N u) H_N(q, u)|``.

    Raises :class:`ScaleOverflow` when the terms of either side are so large
    that the working precision cannot resolve an absolute residual of ``tol``.
    """
    q = to_mpc(q)
    u = to_mpc(u)
    _check_disk(q)
    if q == 0:
        raise ScaleOverflow("the window prefactor is unbounded at q = 0")
    tol = eps_digits(mp.dps - 10) if tol is None else mpmath.mpf(tol)
    log_aq = mpmath.log(abs(q))
    re_u = mpmath.re(u)
    # largest term of the theta series at x = -q**-N e**u, in log10
    log_scale = max(
        (j * (j + 1) / 2 - N * j) * log_aq + j * re_u for j in range(0, 2 * N + 12)
    ) / mpmath.log(10)
    log_scale = max(log_scale, 0)
    if log_scale > mp.dps + mpmath.log10(tol) - 3:
        raise ScaleOverflow(
            f"terms of size 1e{int(log_scale)} cannot resolve {mpmath.nstr(tol, 3)} at {mp.dps} digits"
        )
    x = -q ** (-N) * mpmath.exp(u)
    lhs = theta_jet(q, x, tol=tol / 4).value
    pref = (-1) ** N * q ** (-(N * (N - 1) // 2)) * mpmath.exp(N * u)
    hN = window_jet(q, u, N, tol=tol / (4 * abs(pref))).h
    return abs(lhs - pref * hN)
