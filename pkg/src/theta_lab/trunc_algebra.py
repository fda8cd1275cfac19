"""Exact algebra of the finite approximants.

Polynomials are kept sparse and exact.  A :class:`SparseQPoly` is a
polynomial in a main variable (``x``, ``y`` or ``u``) whose coefficients are
integer combinations of powers of a parameter (``q``, or ``t`` with
``q = t**2`` when half-integer powers of ``q`` would otherwise appear).
Dense coefficient arithmetic in the parameter is delegated to FLINT's
``fmpz_poly``; the fraction-free determinant is implemented here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, gcd
from typing import Iterable, NamedTuple, Sequence

import mpmath
from flint import fmpz_poly
from mpmath import mp

from .errors import DegenerateInput, DegreeTooLarge
from .precision import to_mpc, with_prec

DISC_DEGREE_CAP = 14

__all__ = [
    "SparseQPoly",
    "IntQPoly",
    "truncation_poly",
    "jensen_polynomials",
    "jensen_identity_check",
    "psi_section",
    "central_factor_witness",
    "central_condition",
    "even_reduction",
    "discriminant_exact",
    "discriminant_raw",
    "even_factorization_check",
    "EvenFactorization",
]


def _tri(j: int) -> int:
    return j * (j + 1) // 2


@dataclass(frozen=True)
class SparseQPoly:
    """Sparse polynomial ``sum c * param**exp * var**deg``.

    ``terms`` holds ``(deg, exp, coeff)`` triples sorted by ``(deg, exp)``,
    without zero coefficients and without repeated ``(deg, exp)`` keys.  A
    degree may carry several parameter powers (needed for the reduced
    polynomial in ``u``).  ``var=None`` marks a univariate polynomial in the
    parameter, stored with ``deg = 0``.  ``prefactor`` is an exact rational
    scale: the represented polynomial is ``prefactor * sum(...)``.
    """

    var: str | None
    param: str
    terms: tuple[tuple[int, int, int], ...]
    prefactor: Fraction = Fraction(1)

    def __post_init__(self):
        keys = [(d, e) for d, e, _ in self.terms]
        if keys != sorted(set(keys)):
            raise ValueError("terms must be sorted by (deg, exp) without repeats")
        for d, e, c in self.terms:
            if d < 0 or e < 0:
                raise ValueError("negative degree or exponent")
            if c == 0:
                raise ValueError("zero coefficient stored")

    @classmethod
    def from_terms(cls, var, param, terms: Iterable[tuple[int, int, int]], prefactor=Fraction(1)):
        acc: dict[tuple[int, int], int] = {}
        for d, e, c in terms:
            acc[(d, e)] = acc.get((d, e), 0) + int(c)
        clean = tuple((d, e, c) for (d, e), c in sorted(acc.items()) if c != 0)
        return cls(var, param, clean, Fraction(prefactor))

    @property
    def degree(self) -> int:
        return max((d for d, _, _ in self.terms), default=-1)

    def coefficient_polys(self) -> list[fmpz_poly]:
        """Coefficients in the main variable as dense ``fmpz_poly`` in the parameter."""
        out = [dict() for _ in range(self.degree + 1)]
        for d, e, c in self.terms:
            out[d][e] = c
        polys = []
        for row in out:
            top = max(row, default=-1)
            polys.append(fmpz_poly([row.get(i, 0) for i in range(top + 1)]))
        return polys

    def derivative(self) -> "SparseQPoly":
        return SparseQPoly.from_terms(
            self.var, self.param, ((d - 1, e, d * c) for d, e, c in self.terms if d > 0), self.prefactor
        )

    def evaluate(self, p, v=None):
        """Value at parameter ``p`` and variable ``v`` (exact for Fraction input)."""
        if all(isinstance(a, (int, Fraction)) for a in (p, v) if a is not None):
            p = Fraction(p)
            v = Fraction(1) if v is None else Fraction(v)
            total = sum((c * p**e * v**d for d, e, c in self.terms), Fraction(0))
            return self.prefactor * total
        p = to_mpc(p)
        v = mpmath.mpc(1) if v is None else to_mpc(v)
        total = mpmath.fsum(c * p**e * v**d for d, e, c in self.terms)
        return mpmath.mpf(self.prefactor.numerator) / self.prefactor.denominator * total

    def dump(self) -> str:
        """One ``x_degree q_exponent coefficient`` line per term (prefactor not included)."""
        return "".join(f"{d} {e} {c}\n" for d, e, c in self.terms)


@dataclass(frozen=True)
class IntQPoly:
    """Dense integer polynomial in the parameter, with a stripped monomial and content.

    The full polynomial is ``content * param**q_shift * sum(coeffs[i] * param**i)``.
    """

    coeffs: tuple[int, ...]
    q_shift: int = 0
    content: int = 1
    param: str = "q"

    def __post_init__(self):
        if not self.coeffs or self.coeffs[-1] == 0:
            raise ValueError("leading coefficient must be non-zero")
        if self.q_shift < 0:
            raise ValueError("prefactor exponent must be non-negative")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def as_fmpz_poly(self) -> fmpz_poly:
        return fmpz_poly(list(self.coeffs))

    def full(self) -> fmpz_poly:
        return fmpz_poly([0] * self.q_shift + [self.content * c for c in self.coeffs])

    @classmethod
    def reduce(cls, poly: fmpz_poly, param: str = "q") -> "IntQPoly":
        """Strip the lowest power of the parameter and the positive integer content."""
        c = [int(a) for a in poly.coeffs()]
        if not any(c):
            raise DegenerateInput("cannot reduce the zero polynomial")
        low = next(i for i, a in enumerate(c) if a != 0)
        body = c[low:]
        g = 0
        for a in body:
            g = gcd(g, a)
        return cls(tuple(a // g for a in body), low, g, param)

    def evaluate(self, p):
        if isinstance(p, (int, Fraction)):
            p = Fraction(p)
            return sum((a * p**i for i, a in enumerate(self.coeffs)), Fraction(0))
        p = to_mpc(p)
        return mpmath.polyval(list(reversed(self.coeffs)), p)

    def dump(self) -> str:
        return "".join(
            f"0 {self.q_shift + i} {self.content * a}\n" for i, a in enumerate(self.coeffs) if a
        )


def truncation_poly(n: int) -> SparseQPoly:
    if n < 0:
        raise ValueError("n must be non-negative")
    return SparseQPoly("x", "q", tuple((j, _tri(j), 1) for j in range(n + 1)))


def jensen_polynomials(n: int) -> tuple[SparseQPoly, SparseQPoly]:
    """Integral forms of ``g_n`` (Jensen polynomial of theta) and ``p_n`` (partial sum of F).

    ``g_n(q, z) = n! sum q**e_j z**j / ((n-j)! n**j)`` is stored as
    ``n**-n * sum [n! n**(n-j) / (n-j)!] q**e_j z**j`` and
    ``p_n(q, z) = sum q**e_j z**j / j!`` as ``(1/n!) * sum [n!/j!] q**e_j z**j``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    nf = factorial(n)
    g = SparseQPoly(
        "z", "q",
        tuple((j, _tri(j), nf * n ** (n - j) // factorial(n - j)) for j in range(n + 1)),
        Fraction(1, n**n),
    )
    p = SparseQPoly("z", "q", tuple((j, _tri(j), nf // factorial(j)) for j in range(n + 1)), Fraction(1, nf))
    return g, p


@with_prec
def jensen_identity_check(n: int, q, z, guard: int | None = None) -> mpmath.mpf:
    """``|n**n z**n g_n(q, 1/z) - n! q**(n(n+1)/2) p_n(q, n q**(-n-1) z)|``.

    Both sides are evaluated from the exact coefficient tables.  The working
    precision is raised by enough guard digits to cover the largest
    intermediate term, so the result is an absolute residual at the caller's
    precision.
    """
    q = to_mpc(q)
    z = to_mpc(z)
    if q == 0 or z == 0:
        raise DegenerateInput("the Jensen identity needs q != 0 and z != 0")
    g, p = jensen_polynomials(n)
    if guard is None:
        lq = abs(float(mpmath.log10(abs(q))))
        lz = abs(float(mpmath.log10(abs(z))))
        guard = int(n * (n + 2) * lq + 2 * n * lz + 2 * n * mpmath.log10(n + 1)) + 10
    with mp.extradps(guard):
        lhs = n**n * z**n * g.evaluate(q, 1 / z)
        rhs = factorial(n) * q ** _tri(n) * p.evaluate(q, n * q ** (-n - 1) * z)
        diff = abs(lhs - rhs)
    return +diff


def psi_section(m: int) -> SparseQPoly:
    """``sum_{k<=m} (-1)**k (2k+1) q**(k(k+1)/2)``, as a univariate polynomial in ``q``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return SparseQPoly(None, "q", tuple((0, _tri(k), (-1) ** k * (2 * k + 1)) for k in range(m + 1)))


def psi_section_int(m: int) -> IntQPoly:
    c = [0] * (_tri(m) + 1)
    for k in range(m + 1):
        c[_tri(k)] = (-1) ** k * (2 * k + 1)
    return IntQPoly(tuple(c))


class CentralWitness(NamedTuple):
    residual_theta: object
    residual_dtheta: object


def _central_terms(m: int):
    # q**N_m * Q_m(q, y) = sum q**(N_m + j(j-2m-1)/2) y**j, all exponents >= 0
    Nm = _tri(m)
    return [(j, Nm + j * (j - 2 * m - 1) // 2) for j in range(2 * m + 2)]


def central_factor_witness(m: int, q, tol=None, prec: int | None = None) -> CentralWitness:
    """Residuals of the odd truncation and its derivative at ``x = -q**-(m+1)``.

    The point is evaluated in the rescaled variable ``y`` with
    ``x = -q**-(m+1) * y``, multiplied by ``q**N_m`` so that every exponent is
    non-negative.  The residuals are then taken at ``y = 1``.  The first one
    vanishes identically; the second equals ``|Psi_m(q)|``.  Fraction or
    integer ``q`` gives exact rational residuals.  ``tol`` is not used in the
    evaluation; callers compare against ``tol * central_condition(m, q)``.
    """
    terms = _central_terms(m)
    if isinstance(q, (int, Fraction)):
        q = Fraction(q)
        if q == 0:
            raise DegenerateInput("q = 0 is not admissible")
        r0 = sum((q**e * (-1) ** j for j, e in terms), Fraction(0))
        r1 = sum((j * q**e * (-1) ** (j - 1) for j, e in terms if j), Fraction(0))
        return CentralWitness(abs(r0), abs(r1))
    with mp.workdps(prec or mp.dps):
        q = to_mpc(q)
        if q == 0:
            raise DegenerateInput("q = 0 is not admissible")
        r0 = mpmath.fsum(q**e * (-1) ** j for j, e in terms)
        r1 = mpmath.fsum(j * q**e * (-1) ** (j - 1) for j, e in terms if j)
        return CentralWitness(abs(r0), abs(r1))


def central_condition(m: int, q) -> mpmath.mpf:
    """Sum of absolute term sizes in the rescaled evaluation; the factor ``kappa``."""
    aq = abs(to_mpc(q))
    return mpmath.fsum((j + 1) * aq**e for j, e in _central_terms(m))


def _dickson_table(m: int) -> list[list[int]]:
    # V_k(y + 1/y) = y**k + y**-k as an integer polynomial in u
    V = [[2], [0, 1]]
    for k in range(1, m):
        nxt = [0] + V[k]
        for i, a in enumerate(V[k - 1]):
            nxt[i] -= a
        V.append(nxt)
    return V[: m + 1]


def even_reduction(m: int) -> tuple[SparseQPoly, SparseQPoly]:
    """Palindromic form ``R_m(t, y)`` of the even truncation and its reduction ``S_m(t, u)``.

    ``R_m(t, y) = sum_{j<=2m} t**((j-m)**2) y**j`` and ``y**m S_m(t, y + 1/y) = R_m``.
    ``S_m`` is found by downward elimination: the top remaining coefficient
    of ``R`` at ``y**(m+k)`` becomes the ``u**k`` coefficient of ``S``, and
    ``y**m (y + 1/y)**k`` times it is subtracted.
    """
    if m < 1:
        raise ValueError("m must be positive")
    R = SparseQPoly("y", "t", tuple((j, (j - m) ** 2, 1) for j in range(2 * m + 1)))
    # rem[j] is a dict exp -> coeff for the coefficient of y**j
    rem: list[dict[int, int]] = [dict() for _ in range(2 * m + 1)]
    for j, e, c in R.terms:
        rem[j][e] = rem[j].get(e, 0) + c
    s_terms = []
    for k in range(m, -1, -1):
        top = {e: c for e, c in rem[m + k].items() if c}
        for e, c in top.items():
            s_terms.append((k, e, c))
            for i in range(k + 1):
                j = m + k - 2 * i  # y**m * y**(k-i) * y**-i
                rem[j][e] = rem[j].get(e, 0) - comb(k, i) * c
    if any(c for row in rem for c in row.values()):
        raise AssertionError("palindromic elimination left a remainder")
    S = SparseQPoly.from_terms("u", "t", s_terms)
    return R, S


def _sylvester(a: Sequence[fmpz_poly], b: Sequence[fmpz_poly]) -> list[list[fmpz_poly]]:
    m, n = len(a) - 1, len(b) - 1
    size = m + n
    zero = fmpz_poly(0)
    M = [[zero] * size for _ in range(size)]
    for i in range(n):
        for k, c in enumerate(reversed(a)):
            M[i][i + k] = c
    for i in range(m):
        for k, c in enumerate(reversed(b)):
            M[n + i][i + k] = c
    return M


def _bareiss_det(M: list[list[fmpz_poly]]) -> fmpz_poly:
    """Fraction-free elimination; every division below is exact."""
    n = len(M)
    if n == 0:
        return fmpz_poly(1)
    M = [row[:] for row in M]
    prev = fmpz_poly(1)
    sign = 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return fmpz_poly(0)
        pivot = M[k][k]
        for i in range(k + 1, n):
            mik = M[i][k]
            row_i, row_k = M[i], M[k]
            for j in range(k + 1, n):
                num = row_i[j] * pivot - mik * row_k[j]
                quo, r = divmod(num, prev)
                if r != 0:
                    raise ArithmeticError("inexact Bareiss division")
                row_i[j] = quo
        prev = pivot
    return sign * M[n - 1][n - 1]


def discriminant_raw(p: SparseQPoly, cap: int = DISC_DEGREE_CAP) -> fmpz_poly:
    """Exact ``disc_var p`` as a dense polynomial in the parameter.

    Computed as ``(-1)**(n(n-1)/2) Res(p, p') / lc(p)``.  Degree 1 gives 1.
    """
    n = p.degree
    if n < 1:
        raise DegenerateInput("discriminant needs degree >= 1")
    if n > cap:
        raise DegreeTooLarge(f"degree {n} exceeds the exact discriminant cap {cap}")
    if p.prefactor != 1:
        raise DegenerateInput("discriminants are taken of the integral form (prefactor 1)")
    a = p.coefficient_polys()
    if n == 1:
        return fmpz_poly(1)
    da = [d * a[d] for d in range(1, n + 1)]
    res = _bareiss_det(_sylvester(a, da))
    quo, r = divmod(res, a[n])
    if r != 0:
        raise ArithmeticError("resultant not divisible by the leading coefficient")
    return quo if (n * (n - 1) // 2) % 2 == 0 else -quo


def discriminant_exact(p: SparseQPoly, cap: int = DISC_DEGREE_CAP) -> IntQPoly:
    """Reduced exact discriminant: the parameter power and integer content are stripped and recorded."""
    if p.degree < 2:
        raise DegenerateInput("discriminant_exact needs degree >= 2")
    return IntQPoly.reduce(discriminant_raw(p, cap), p.param)


@dataclass(frozen=True)
class EvenFactorization:
    m: int
    holds: bool
    unit_sign: int
    unit_t_power: int
    disc_R: fmpz_poly = field(repr=False)
    C_t: fmpz_poly = field(repr=False)
    B_t: fmpz_poly = field(repr=False)

    @property
    def C_q(self) -> fmpz_poly:
        """``C_m`` in the variable ``q = t**2`` (it is even in ``t``)."""
        c = [int(a) for a in self.C_t.coeffs()]
        return fmpz_poly(c[::2])

    @property
    def B_nonconstant(self) -> bool:
        return self.B_t.degree() > 0


def _tpoly_value_at(R: SparseQPoly, y: int) -> fmpz_poly:
    top = max(e for _, e, _ in R.terms)
    c = [0] * (top + 1)
    for d, e, k in R.terms:
        c[e] += k * y**d
    return fmpz_poly(c)


def _strip_t(poly: fmpz_poly) -> tuple[int, list[int]]:
    c = [int(a) for a in poly.coeffs()]
    low = next(i for i, a in enumerate(c) if a != 0)
    return low, c[low:]


def even_factorization_check(m: int, cap: int = DISC_DEGREE_CAP) -> EvenFactorization:
    """Compare ``disc_y R_m`` with ``R_m(t,1) R_m(t,-1) disc_u(S_m)**2`` exactly.

    The two sides must agree up to a unit ``+-t**k``; the sign and ``k``
    (left power minus right power) are reported.
    """
    R, S = even_reduction(m)
    disc_R = discriminant_raw(R, cap)
    C = _tpoly_value_at(R, 1) * _tpoly_value_at(R, -1)
    B = discriminant_raw(S, cap)
    rhs = C * B * B
    if disc_R == 0 or rhs == 0:
        return EvenFactorization(m, False, 0, 0, disc_R, C, B)
    kl, bl = _strip_t(disc_R)
    kr, br = _strip_t(rhs)
    if bl == br:
        sign = 1
    elif bl == [-a for a in br]:
        sign = -1
    else:
        return EvenFactorization(m, False, 0, kl - kr, disc_R, C, B)
    return EvenFactorization(m, True, sign, kl - kr, disc_R, C, B)
