"""All-roots solver, zero statistics and the outer-annulus simplicity check.

Roots are found by Aberth-Ehrlich simultaneous iteration.  A double
precision pass (numpy) started from Newton-polygon radii gives starting
values, and a multiprecision pass polishes them.  When the coefficient range
does not fit a double, the multiprecision pass starts from the Newton-polygon
points directly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
from mpmath import mp

from .errors import DegenerateInput, NonConvergence
from .precision import fmt, to_mpc, with_prec
from .trunc_algebra import IntQPoly, SparseQPoly

BACKWARD_GUARD = 5
MAX_MP_SWEEPS = 200
MAX_FLOAT_SWEEPS = 500

__all__ = [
    "RootSet",
    "DistributionReport",
    "OuterVerdict",
    "roots_all",
    "roots_of_coeffs",
    "distribution_report",
    "discrepancy",
    "discrepancy_bruteforce",
    "outer_coefficient_sum",
    "outer_simplicity_check",
    "OUTER_EPS0",
]


@dataclass
class RootSet:
    """Roots with multiplicities.

    ``clustered[i]`` is set when root ``i`` came from a group of iterates
    closer than ``10**(-prec/2)``; those groups are merged and carry the
    group size as multiplicity.
    """

    roots: list
    multiplicities: list[int]
    source_degree: int
    certified_separation: mpmath.mpf
    backward_errors: list = field(default_factory=list)
    clustered: list[bool] = field(default_factory=list)
    prec: int = 0
    valid: bool = True

    def expanded(self) -> list:
        out = []
        for r, k in zip(self.roots, self.multiplicities):
            out.extend([r] * k)
        return out

    def to_csv(self, digits: int = 30) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "abs", "arg", "multiplicity"])
        for r, k in zip(self.roots, self.multiplicities):
            w.writerow([fmt(r.real, digits), fmt(r.imag, digits), fmt(abs(r), digits), fmt(mpmath.arg(r), digits), k])
        return buf.getvalue()


def _coeff_list(p) -> list:
    """Dense low-to-high coefficients as mpc, for the supported inputs."""
    if isinstance(p, IntQPoly):
        return [mpmath.mpc(c) for c in p.coeffs]
    if isinstance(p, SparseQPoly):
        if p.var is not None:
            raise DegenerateInput("roots_all takes univariate polynomials in the parameter")
        top = max(e for _, e, _ in p.terms)
        c = [0] * (top + 1)
        for _, e, k in p.terms:
            c[e] += k
        return [mpmath.mpc(a) for a in c]
    return [to_mpc(a) for a in p]


def _newton_polygon_starts(abs_log: Sequence[float], n: int, offset: float = 0.7) -> list[complex]:
    """Starting points on circles whose radii come from the upper convex hull of ``log|a_i|``.

    Returned as ``(log_radius, angle)`` pairs so that huge radii stay finite.
    """
    pts = [(i, v) for i, v in enumerate(abs_log) if v != -math.inf]
    hull: list[tuple[int, float]] = []
    for pt in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (pt[0] - x1) <= (pt[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(pt)
    starts = []
    for (i0, v0), (i1, v1) in zip(hull, hull[1:]):
        k = i1 - i0
        log_r = (v0 - v1) / k
        for s in range(k):
            ang = 2 * math.pi * s / k + offset + 2 * math.pi * i0 / n
            starts.append((log_r, ang))
    return starts


def _float_aberth(coeffs: list[complex], starts: list[complex]) -> np.ndarray:
    a = np.array(coeffs, dtype=complex)
    n = len(a) - 1
    ar = a[::-1]
    z = np.array(starts, dtype=complex)
    done = np.zeros(n, dtype=bool)
    for _ in range(MAX_FLOAT_SWEEPS):
        inner = np.abs(z) <= 1
        ratio = np.empty(n, dtype=complex)
        if inner.any():
            zi = z[inner]
            p = np.full_like(zi, a[-1])
            dp = np.zeros_like(zi)
            for c in a[-2::-1]:
                dp = dp * zi + p
                p = p * zi + c
            ratio[inner] = p / dp
        if (~inner).any():
            zo = z[~inner]
            w = 1 / zo
            p = np.full_like(w, ar[-1])
            dp = np.zeros_like(w)
            for c in ar[-2::-1]:
                dp = dp * w + p
                p = p * w + c
            ratio[~inner] = zo * p / (n * p - w * dp)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1)
        inv = 1 / diff
        np.fill_diagonal(inv, 0)
        s = inv.sum(axis=1)
        delta = ratio / (1 - ratio * s)
        delta[~np.isfinite(delta)] = 0
        delta[done] = 0
        z = z - delta
        done |= np.abs(delta) <= 1e-14 * np.maximum(np.abs(z), 1e-300)
        if done.all():
            break
    return z


def _eval_pd(c, z):
    p = c[-1]
    dp = mpmath.mpc(0)
    for a in c[-2::-1]:
        dp = dp * z + p
        p = p * z + a
    return p, dp


def _eval_sparse(terms, z):
    p = mpmath.mpc(0)
    dp = mpmath.mpc(0)
    for e, a in terms:
        if e == 0:
            p += a
            continue
        ze1 = z ** (e - 1)
        p += a * ze1 * z
        dp += e * a * ze1
    return p, dp


def _mp_aberth(c: list, z: list, tol_digits: int) -> tuple[list, bool]:
    n = len(c) - 1
    terms = [(i, a) for i, a in enumerate(c) if a != 0]
    sparse = len(terms) * 4 < n
    done = [False] * n
    eps = mpmath.mpf(10) ** (-tol_digits)
    noise = mpmath.mpf(10) ** (3 - mp.dps)
    absc = [abs(a) for a in c]
    for _ in range(MAX_MP_SWEEPS):
        moved = False
        for i in range(n):
            if done[i]:
                continue
            zi = z[i]
            p, dp = _eval_sparse(terms, zi) if sparse else _eval_pd(c, zi)
            if p == 0:
                done[i] = True
                continue
            if dp == 0:
                z[i] = zi + eps * (1 + abs(zi))
                moved = True
                continue
            az = abs(zi)
            if abs(p) <= noise * mpmath.polyval(absc[::-1], az):
                # the value is at rounding level: one last step, then stop
                done[i] = True
            r = p / dp
            s = mpmath.fsum(1 / (zi - z[j]) for j in range(n) if j != i and z[j] != zi)
            d = r / (1 - r * s)
            z[i] = zi - d
            moved = True
            if abs(d) <= eps * max(1, abs(z[i])):
                done[i] = True
        if all(done) or not moved:
            return z, True
    return z, False


@with_prec
def roots_of_coeffs(coeffs: Sequence, cluster_digits: int | None = None) -> RootSet:
    """All roots of ``sum coeffs[i] x**i`` at the active precision.

    Zero roots are split off exactly.  Iterates closer than
    ``10**(-prec/2)`` (relative to ``max(1,|r|)``) are merged into one root
    with the group size as multiplicity.
    """
    c = [to_mpc(a) for a in coeffs]
    while c and c[-1] == 0:
        c.pop()
    if len(c) < 2:
        raise DegenerateInput("roots need degree >= 1")
    degree = len(c) - 1
    nzero = next(i for i, a in enumerate(c) if a != 0)
    c = c[nzero:]
    prec = mp.dps
    roots: list = []
    ok = True
    if len(c) > 1:
        work = prec + BACKWARD_GUARD + 5
        with mp.workdps(work):
            logs = [float(mpmath.log(abs(a))) if a != 0 else -math.inf for a in c]
            starts = _newton_polygon_starts(logs, len(c) - 1)
            finite = [v for v in logs if v != -math.inf]
            span = max(finite) - min(finite)
            log_r = [lr for lr, _ in starts]
            if span < 600 and max(abs(v) for v in log_r) * (len(c) - 1) < 600:
                scale = max(finite)
                fc = [complex(mpmath.exp(mpmath.log(a) - scale)) if a != 0 else 0j for a in c]
                z0 = _float_aberth(fc, [math.exp(lr) * complex(math.cos(t), math.sin(t)) for lr, t in starts])
                z = [mpmath.mpc(complex(v)) for v in z0]
            else:
                z = [mpmath.exp(mpmath.mpf(lr)) * mpmath.expj(t) for lr, t in starts]
            z, ok = _mp_aberth(c, z, prec + BACKWARD_GUARD)
            roots = [+r for r in z]
    # group near-coincident iterates
    cl = prec // 2 if cluster_digits is None else cluster_digits
    thr = mpmath.mpf(10) ** (-cl)
    groups: list[list] = []
    for r in sorted(roots, key=lambda v: (float(abs(v)), float(mpmath.arg(v)))):
        for g in groups:
            if abs(g[0] - r) <= thr * max(1, abs(r)):
                g.append(r)
                break
        else:
            groups.append([r])
    out_roots = [mpmath.mpc(0)] if nzero else []
    mult = [nzero] if nzero else []
    clustered = [nzero > 1] if nzero else []
    for g in groups:
        out_roots.append(mpmath.fsum(g) / len(g))
        mult.append(len(g))
        clustered.append(len(g) > 1)
    back = [_backward_error(c, r) if r != 0 else mpmath.mpf(0) for r in out_roots]
    sep = _min_separation(out_roots)
    rs = RootSet(out_roots, mult, degree, sep, back, clustered, prec, ok)
    if not ok:
        rs.valid = False
        raise NonConvergence(f"Aberth iteration did not converge for degree {degree}", partial=rs)
    return rs


def _backward_error(c, r):
    p, _ = _eval_pd(c, r)
    norm = mpmath.fsum(abs(a) * abs(r) ** i for i, a in enumerate(c))
    return abs(p) / norm


def _min_separation(roots) -> mpmath.mpf:
    if len(roots) < 2:
        return mpmath.inf
    pts = sorted(roots, key=lambda v: float(v.real))
    best = mpmath.inf
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if pts[j].real - pts[i].real >= best:
                break
            best = min(best, abs(pts[j] - pts[i]))
    return best


def roots_all(p, prec: int | None = None, cluster_digits: int | None = None) -> RootSet:
    """Roots of an :class:`IntQPoly` (reduced body), a univariate :class:`SparseQPoly`, or a coefficient list."""
    return roots_of_coeffs(_coeff_list(p), cluster_digits=cluster_digits, prec=prec)


@dataclass(frozen=True)
class DistributionReport:
    discrepancy: mpmath.mpf
    radial_fraction: dict
    inner_count: dict
    n_roots: int


def _sorted_angles(points) -> list:
    two_pi = 2 * mpmath.pi
    ang = []
    for r in points:
        a = mpmath.arg(r)
        if a < 0:
            a += two_pi
        ang.append(a)
    return sorted(ang)


def discrepancy(points) -> mpmath.mpf:
    """Largest ``|count/N - length/2pi|`` over half-open arcs ``[a_i, a_j)`` between point arguments.

    With distinct sorted angles ``b_k`` and ``C_k`` points strictly below
    ``b_k``, the deviation of ``[b_i, b_j)`` is ``c_j - c_i`` with
    ``c_k = C_k/N - b_k/2pi`` (the wrapped arc gives ``c_i - c_j``), so the
    supremum is ``max c - min c``.  Tied arguments form one endpoint.
    """
    ang = _sorted_angles(points)
    N = len(ang)
    if N == 0:
        raise DegenerateInput("empty point set")
    two_pi = 2 * mpmath.pi
    cvals = [mpmath.mpf(k) / N - a / two_pi for k, a in enumerate(ang) if k == 0 or a != ang[k - 1]]
    return max(cvals) - min(cvals)


def discrepancy_bruteforce(points) -> mpmath.mpf:
    """Quadratic reference: enumerate every arc ``[a_i, a_j)`` directly."""
    ang = _sorted_angles(points)
    N = len(ang)
    two_pi = 2 * mpmath.pi
    best = mpmath.mpf(0)
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            length = (ang[j] - ang[i]) % two_pi
            count = sum(1 for a in ang if (a - ang[i]) % two_pi < length)
            best = max(best, abs(mpmath.mpf(count) / N - length / two_pi))
    return best


def distribution_report(rs: RootSet, eps=(0.05, 0.1, 0.2), radii=(0.8,)) -> DistributionReport:
    pts = rs.expanded() if isinstance(rs, RootSet) else list(rs)
    if not pts:
        raise DegenerateInput("empty root set")
    N = len(pts)
    mods = [abs(r) for r in pts]
    radial = {e: sum(1 for a in mods if 1 - e < a < 1 + e) / N for e in eps}
    inner = {r: sum(1 for a in mods if a <= r) for r in radii}
    return DistributionReport(discrepancy(pts), radial, inner, N)


# Rouche bookkeeping for 1 + w**N + E(w) on the circles |w - w_k| = eta/N
# around the roots w_k of w**N = -1, with eta = 1/2:
#   |1 + w**N| >= 2 eta + 1 - e**eta - e**eta (e**(eta**2/(4-eta)) - 1) > 0.229
#   |E(w)| <= (sum of |coefficients|) * e**eta
# so one simple zero per circle once the sum is below 0.229/e**0.5 > 0.139.
# 0.1 keeps a margin; the circles are disjoint for every N >= 2.
OUTER_EPS0 = mpmath.mpf("0.1")


@dataclass(frozen=True)
class OuterVerdict:
    verdict: str
    coefficient_sum: mpmath.mpf
    eps0: mpmath.mpf
    min_separation: mpmath.mpf | None
    n: int

    @property
    def simple(self) -> bool:
        return self.verdict == "Simple"


def outer_coefficient_sum(n: int, aq) -> mpmath.mpf:
    """``sum_{j=1}^{n-1} |q|**(-j(n-j)/2)`` for the normalized polynomial of degree ``n``."""
    aq = mpmath.mpf(aq)
    return mpmath.fsum(aq ** (-mpmath.mpf(j * (n - j)) / 2) for j in range(1, n))


@with_prec
def outer_simplicity_check(n: int, q, eps0=None, verify: bool = True) -> OuterVerdict:
    """Simple-zero verdict for the truncation at a point outside the unit disk.

    Returns ``Simple`` when the coefficient sum of the normalized polynomial
    is below ``eps0``; in that case the roots of the truncation are also
    computed at twice the precision and their minimal separation recorded.
    """
    q = to_mpc(q)
    if abs(q) <= 1:
        raise DegenerateInput("outer check needs |q| > 1")
    if n < 2:
        raise ValueError("n must be at least 2")
    eps0 = OUTER_EPS0 if eps0 is None else mpmath.mpf(eps0)
    s = outer_coefficient_sum(n, abs(q))
    if s >= eps0:
        return OuterVerdict("Inconclusive", s, eps0, None, n)
    sep = None
    if verify:
        with mp.workdps(2 * mp.dps):
            coeffs = [q ** (j * (j + 1) // 2) for j in range(n + 1)]
            rs = roots_of_coeffs(coeffs)
            mods = [abs(r) for r in rs.roots]
            rel = min(
                abs(rs.roots[i] - rs.roots[j]) / max(mods[i], mods[j])
                for i in range(len(mods))
                for j in range(i + 1, len(mods))
            )
            sep = +rel if len(rs.roots) == n else mpmath.mpf(0)
    return OuterVerdict("Simple", s, eps0, sep, n)
