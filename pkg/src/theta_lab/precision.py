"""Working-precision helpers around mpmath.

Every public numeric routine takes ``prec`` in decimal digits. ``None`` means
"use whatever precision is active", which lets callers nest routines inside a
single ``mp.workdps`` block without each one resetting it.
"""
from __future__ import annotations

import functools
import os
from fractions import Fraction

import mpmath
from mpmath import mp

DEFAULT_PREC = 50
MIN_PREC = 30
PREC_ENV = "THETA_LAB_PREC"


def default_prec() -> int:
    env = os.environ.get(PREC_ENV)
    if env:
        return max(int(env), MIN_PREC)
    return DEFAULT_PREC


def with_prec(func):
    """Run ``func`` under ``mp.workdps(prec)`` when a ``prec`` keyword is given."""

    @functools.wraps(func)
    def wrapper(*args, prec=None, **kwargs):
        if prec is None:
            return func(*args, **kwargs)
        with mp.workdps(prec):
            return func(*args, **kwargs)

    return wrapper


def to_mpc(x) -> mpmath.mpc:
    if isinstance(x, Fraction):
        return mpmath.mpc(mpmath.mpf(x.numerator) / x.denominator)
    if isinstance(x, str):
        return parse_complex(x)
    return mpmath.mpc(x)


def _imag_coeff(text: str):
    if text in ("", "+"):
        return mpmath.mpf(1)
    if text == "-":
        return mpmath.mpf(-1)
    return mpmath.mpf(text)


def parse_complex(text: str) -> mpmath.mpc:
    """Parse ``"0.4+0.12i"``, ``"-3e-2j"`` or ``"0.5"`` without going through binary floats."""
    s = text.strip().replace(" ", "")
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    try:
        if not s or s[-1] not in "ij":
            return mpmath.mpc(mpmath.mpf(s))
        body = s[:-1]
        split = None
        for k in range(len(body) - 1, 0, -1):
            if body[k] in "+-" and body[k - 1] not in "eE":
                split = k
                break
        if split is None:
            return mpmath.mpc(0, _imag_coeff(body))
        return mpmath.mpc(mpmath.mpf(body[:split]), _imag_coeff(body[split:]))
    except ValueError:
        raise ValueError(f"cannot parse complex number {text!r}") from None


def to_mpf(x) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def eps_digits(digits: int | None = None) -> mpmath.mpf:
    """``10**-digits`` at the active precision (``mp.dps`` by default)."""
    return mpmath.mpf(10) ** (-(mp.dps if digits is None else digits))


def fmt(x, digits: int = 40) -> str:
    """Fixed-format decimal string of a real number; stable across runs."""
    x = mpmath.mpf(x)
    if x == 0:
        return "0"
    return mpmath.nstr(x, digits, strip_zeros=False, min_fixed=0, max_fixed=0)
