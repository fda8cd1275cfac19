"""Radial root labelling and collision transpositions.

Roots of ``Theta(q, .)`` are labelled at a base point on the circle
``|q| = 0.1`` by increasing modulus and followed along the radial segment
to a spectral point ``q*``.  Each root is carried in the log coordinate
``L = log(-z)``.  Equations are evaluated through the moving-window
function: with ``z = -q**-N e**u`` the zeros of ``Theta`` in ``z`` are the
zeros of ``H_N(q, u)``, and ``N`` is chosen nearest to the current scale
``Re L / |log|q||`` so that every evaluation is well scaled.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
from mpmath import mp

from .core_eval import theta_jet, window_jet
from .errors import (
    DegenerateSingularity,
    LabelAmbiguity,
    MatchFailure,
    PathCollision,
    StepUnderflow,
    ThetaLabError,
)
from .precision import fmt, to_mpc, with_prec

BASE_RADIUS = mpmath.mpf("0.1")
K_CAP = 12
MIN_PREC = 40
REAL_SNAP = 1e-20

__all__ = [
    "RootLabeling",
    "MonodromyRecord",
    "TrackControls",
    "base_labels",
    "continue_radial",
    "collision_label",
    "rational_direction_report",
    "ray_angle",
    "ray_point",
    "records_to_json",
    "samples_to_csv",
]


@dataclass(frozen=True)
class RootLabeling:
    base_point: mpmath.mpc
    labels: tuple[tuple[int, mpmath.mpc], ...]
    K: int
    theta: mpmath.mpf

    def z(self, k: int) -> mpmath.mpc:
        return self.labels[k - 1][1]


@dataclass
class MonodromyRecord:
    q_star: mpmath.mpc
    z_star: mpmath.mpc
    i: int
    j: int
    method: str
    path_steps: int
    min_pair_gap: mpmath.mpf
    base_point: mpmath.mpc
    dropped: list = field(default_factory=list)
    forward: tuple[int, int] | None = None
    backward: tuple[int, int] | None = None

    @property
    def transposition(self) -> tuple[int, int]:
        return (self.i, self.j)

    def to_record(self, digits: int = 20) -> dict:
        return {
            "q_star": [fmt(self.q_star.real, digits), fmt(self.q_star.imag, digits)],
            "z_star": [fmt(self.z_star.real, digits), fmt(self.z_star.imag, digits)],
            "base_point": [fmt(self.base_point.real, digits), fmt(self.base_point.imag, digits)],
            "i": self.i,
            "j": self.j,
            "method": self.method,
            "path_steps": self.path_steps,
            "min_pair_gap": fmt(self.min_pair_gap, 6),
            "forward": None if self.forward is None else list(self.forward),
            "backward": None if self.backward is None else list(self.backward),
            "dropped": [[a, b, fmt(r, 6)] for a, b, r in self.dropped],
        }


@dataclass(frozen=True)
class TrackControls:
    """Step policy for the radial continuation.

    ``dt_init`` and ``dt_max`` are fractions of the segment.  A step is
    accepted when the corrector converges and moves each root by at most
    ``gap_fraction`` of its distance to the nearest other tracked root.
    Gaps are measured as ``|log(z_a/z_b)|``.  Pairs closer than
    ``collision_gap``, or closer than ``drop_gap`` while the step is pinned
    below ``drop_dt``, are treated as a collision on the path.
    """

    dt_init: float = 0.02
    dt_max: float = 0.05
    gap_fraction: float = 0.1
    d_stop: float = 1e-4
    collision_gap: float = 1e-6
    drop_dt: float = 1e-8
    drop_gap: float = 1e-2
    min_dt: float = 1e-13
    max_newton: int = 8
    strict: bool = False


def _ray(q_star) -> tuple[mpmath.mpf, mpmath.mpc]:
    """Ray angle of ``q*``, snapped onto the real axis when the imaginary part is negligible."""
    q_star = to_mpc(q_star)
    if abs(q_star.imag) <= REAL_SNAP * abs(q_star):
        theta = mpmath.mpf(0) if q_star.real > 0 else +mpmath.pi
    else:
        theta = mpmath.arg(q_star)
    return theta, mpmath.expj(theta)


def _rel(a, b):
    """Distance in log coordinates, ``|log(a/b)|`` on the principal branch."""
    return abs(mpmath.log(a / b))


class _Ray:
    """Evaluation of the window equation on one ray ``q = r e**(i theta)``."""

    def __init__(self, theta):
        self.theta = mpmath.mpf(theta)
        self.unit = mpmath.expj(self.theta)

    def q(self, r):
        return r * self.unit

    def logq(self, r):
        return mpmath.mpc(mpmath.log(r), self.theta)

    def eval(self, r, L):
        """``(G, dG/dL, dG/dr)`` with ``G(r, L) = H_N(q, L + N log q)``."""
        lr = mpmath.log(r)
        N = max(0, int(mpmath.nint(L.real / -lr)))
        q = self.q(r)
        u = L + N * self.logq(r)
        jet = window_jet(q, u, N, full=False)
        # d/dr at fixed L: u moves with N log q, q moves along the ray
        dG_dq = jet.hq + jet.hu * N / q
        return jet.h, jet.hu, dG_dq * self.unit

    def z(self, L):
        return -mpmath.exp(L)

    def L(self, z):
        return mpmath.log(-z)

    def newton_full(self, r, L, max_iter=8, tol=None):
        """Newton in ``L`` at fixed ``r``; returns ``(L, G_L, G_r)`` from the last evaluation, or None."""
        tol = mpmath.mpf(10) ** (-(mp.dps - 8)) if tol is None else mpmath.mpf(tol)
        prev = None
        for _ in range(max_iter):
            h, hu, hr = self.eval(r, L)
            if hu == 0:
                return None
            d = h / hu
            L = L - d
            ad = abs(d)
            if ad <= tol:
                return L, hu, hr
            if prev is not None and ad > prev / 2:
                return None
            prev = ad
        return None

    def newton(self, r, L, max_iter=8, tol=None):
        out = self.newton_full(r, L, max_iter, tol)
        return None if out is None else out[0]


@with_prec
def base_labels(theta=0, K: int = 4, negative_ray: bool = False, radius=None) -> RootLabeling:
    """The ``K`` smallest roots of ``Theta(p, .)`` at ``p = 0.1 e**(i theta)``.

    Root ``k`` is found by Newton on ``H_k(p, u)`` from ``u = 0``, i.e. from
    ``z = -p**-k``.
    """
    if K > K_CAP:
        raise ValueError(f"K = {K} exceeds the cap {K_CAP}")
    if K < 1:
        raise ValueError("K must be positive")
    theta = +mpmath.pi if negative_ray else mpmath.mpf(theta)
    r0 = BASE_RADIUS if radius is None else mpmath.mpf(radius)
    ray = _Ray(theta)
    p = ray.q(r0)
    labels = []
    for k in range(1, K + 1):
        L0 = -k * ray.logq(r0)
        L = ray.newton(r0, L0, max_iter=40)
        if L is None:
            raise LabelAmbiguity(f"Newton from -p**-{k} did not converge")
        labels.append((k, ray.z(L)))
    mods = [abs(z) for _, z in labels]
    for a, b in zip(mods, mods[1:]):
        if not a < b or (b - a) <= mpmath.mpf("1e-6") * b:
            raise LabelAmbiguity("base roots are not strictly ordered by modulus")
    return RootLabeling(p, tuple(labels), K, theta)


@dataclass
class _Track:
    label: int
    L: mpmath.mpc
    alive: bool = True


@dataclass
class TrackResult:
    roots: list
    steps: int
    min_pair_gap: mpmath.mpf
    dropped: list
    samples: list = field(default_factory=list)

    def alive(self):
        return [t for t in self.roots if t.alive]


def _track(ray: _Ray, tracks: list[_Track], r_from, r_to, ctl: TrackControls,
           keep_samples: bool = False) -> TrackResult:
    """Predictor-corrector continuation of all live tracks from ``r_from`` to ``r_to``.

    A pair that pins the step below ``drop_dt`` while closer than
    ``drop_gap`` is a double root on the path itself.  It is dropped and
    recorded, or raised as :class:`PathCollision` in strict mode.
    """
    r_from = mpmath.mpf(r_from)
    r_to = mpmath.mpf(r_to)
    span = r_to - r_from
    t = mpmath.mpf(0)
    dt = mpmath.mpf(ctl.dt_init)
    steps = 0
    min_gap = mpmath.inf
    dropped = []
    samples = []
    path_tol = mpmath.mpf(10) ** (-(mp.dps // 2))
    slope = {}
    for tr in tracks:
        _, hu, hr = ray.eval(r_from, tr.L)
        slope[tr.label] = -hr / hu

    def gaps():
        live = [tr for tr in tracks if tr.alive]
        zs = [ray.z(tr.L) for tr in live]
        out = {}
        closest = None
        for a in range(len(live)):
            g = mpmath.inf
            for b in range(len(live)):
                if a != b:
                    d = _rel(zs[a], zs[b])
                    g = min(g, d)
                    if closest is None or d < closest[0]:
                        closest = (d, live[a], live[b])
            out[live[a].label] = g
        return out, live, closest

    def drop(pair, r):
        _, a, b = pair
        if ctl.strict:
            raise PathCollision(f"roots {a.label} and {b.label} meet at |q| = {mpmath.nstr(r, 10)}")
        a.alive = b.alive = False
        dropped.append((min(a.label, b.label), max(a.label, b.label), r))

    while t < 1:
        g, live, closest = gaps()
        r0 = r_from + t * span
        if closest is not None and closest[0] < ctl.collision_gap:
            drop(closest, r0)
            continue
        if len(live) >= 2:
            min_gap = min(min_gap, min(g.values()))
        if keep_samples:
            samples.append((r0, [(tr.label, ray.z(tr.L)) for tr in live]))
        step = min(dt, 1 - t)
        r1 = r_from + (t + step) * span
        new = {}
        ok = True
        for tr in live:
            Lp = tr.L + slope[tr.label] * (r1 - r0)
            out = ray.newton_full(r1, Lp, ctl.max_newton, tol=path_tol)
            if out is None:
                ok = False
                break
            Lc, hu, hr = out
            if _rel(ray.z(Lc), ray.z(tr.L)) > ctl.gap_fraction * g.get(tr.label, mpmath.inf):
                ok = False
                break
            new[tr.label] = (Lc, -hr / hu)
        if ok:
            for tr in live:
                tr.L, slope[tr.label] = new[tr.label]
            t += step
            steps += 1
            dt = min(dt * mpmath.mpf("1.5"), mpmath.mpf(ctl.dt_max))
            continue
        dt /= 2
        if dt < ctl.drop_dt and closest is not None and closest[0] < ctl.drop_gap:
            drop(closest, r0)
            dt = mpmath.mpf(ctl.dt_init)
        elif dt < ctl.min_dt:
            raise StepUnderflow(f"continuation step underflow at |q| = {mpmath.nstr(r0, 10)}")
    for tr in tracks:
        if tr.alive:
            L = ray.newton(r_to, tr.L, ctl.max_newton)
            if L is not None:
                tr.L = L
    g, live, _ = gaps()
    if len(live) >= 2:
        min_gap = min(min_gap, min(g.values()))
    if keep_samples:
        samples.append((r_to, [(tr.label, ray.z(tr.L)) for tr in live]))
    return TrackResult(tracks, steps, min_gap, dropped, samples)


@with_prec
def continue_radial(labeling: RootLabeling, q_star, controls: TrackControls | None = None,
                    keep_samples: bool = False) -> TrackResult:
    """Follow all labelled roots along the ray to ``|q*| - d_stop |q*|``."""
    ctl = controls or TrackControls()
    q_star = to_mpc(q_star)
    if abs(q_star) >= 1:
        raise ValueError("q* must lie inside the unit disk")
    theta, _ = _ray(q_star)
    if abs(mpmath.expj(theta) - mpmath.expj(labeling.theta)) > mpmath.mpf("1e-12"):
        raise ValueError("q* is not on the ray of the labelling")
    ray = _Ray(labeling.theta)
    r0 = abs(labeling.base_point)
    r_end = abs(q_star) * (1 - mpmath.mpf(ctl.d_stop))
    tracks = [_Track(k, ray.L(z)) for k, z in labeling.labels]
    return _track(ray, tracks, r0, r_end, ctl, keep_samples=keep_samples)


def _nearest_pair(res: TrackResult, ray: _Ray, z_star) -> tuple[int, int, mpmath.mpf]:
    live = res.alive()
    ds = sorted((_rel(ray.z(tr.L), z_star), tr.label) for tr in live)
    if len(ds) < 2:
        raise MatchFailure("fewer than two live roots at the endpoint")
    (d1, a), (d2, b), *rest = ds
    if rest and rest[0][0] <= 4 * d2:
        raise MatchFailure("endpoint pair is not isolated from the other roots")
    return min(a, b), max(a, b), d2


def _local_split(q_star, z_star, dq):
    """Two roots near ``z*`` at ``q* + dq`` from the square-root model, Newton-polished in ``z``."""
    jet = theta_jet(q_star, z_star)
    if abs(jet.dq) <= mpmath.mpf(10) ** (-(mp.dps // 2)) or abs(jet.dzz) <= mpmath.mpf(10) ** (-(mp.dps // 2)):
        raise DegenerateSingularity("Theta_q or Theta_zz vanishes at the spectral point")
    s = mpmath.sqrt(-2 * jet.dq * dq / jet.dzz)
    q = q_star + dq
    out = []
    for z in (z_star + s, z_star - s):
        for _ in range(60):
            j = theta_jet(q, z)
            step = j.value / j.dz
            z = z - step
            if abs(step) <= mpmath.mpf(10) ** (-(mp.dps - 8)) * abs(z):
                break
        else:
            raise MatchFailure("square-root seed did not polish")
        out.append(z)
    if _rel(out[0], out[1]) < abs(s) / abs(z_star) / 10:
        raise MatchFailure("square-root seeds merged into one root")
    return out


def _backward(q_star, z_star, ctl: TrackControls):
    theta, unit = _ray(q_star)
    ray = _Ray(theta)
    r_star = abs(q_star)
    r_end = r_star * (1 - mpmath.mpf(ctl.d_stop))
    q_e = ray.q(r_end)
    z_a, z_b = _local_split(q_star, z_star, q_e - q_star)
    tracks = [_Track(-1, ray.L(z_a)), _Track(-2, ray.L(z_b))]
    res = _track(ray, tracks, r_end, BASE_RADIUS, ctl)
    if len(res.alive()) != 2:
        raise MatchFailure("backward branches collided on the path")
    ends = [ray.z(tr.L) for tr in res.roots]
    # label by modulus order among the base roots, up to the cap
    K = K_CAP
    lab = base_labels(theta, K)
    zs = [z for _, z in lab.labels]
    matched = []
    for z in ends:
        d = [(_rel(z, w), k) for k, w in lab.labels]
        d.sort()
        (d1, k1), (d2, _k2) = d[0], d[1]
        # half the distance from label k1 to its nearest neighbour
        half = min(_rel(zs[k1 - 1], zs[k - 1]) for k in range(1, K + 1) if k != k1) / 2
        if d1 > half:
            raise MatchFailure(f"backward endpoint is not within half the label gap (d = {mpmath.nstr(d1, 3)})")
        matched.append(k1)
    if matched[0] == matched[1]:
        raise MatchFailure("both branches matched the same label")
    return (min(matched), max(matched)), res, lab


@with_prec
def collision_label(q_star, z_star, K: int | None = None, controls: TrackControls | None = None,
                    method: str = "both") -> MonodromyRecord:
    """Transposition of base labels produced by the spectral point ``(q*, z*)``.

    ``method="backward"`` splits the double root with the square-root model
    just before ``q*`` and follows both branches back to the base circle;
    ``"forward"`` follows ``K`` base roots out to ``q*`` and takes the two
    nearest to ``z*``; ``"both"`` runs backward, then forward with
    ``K = j + 2`` and requires agreement.  Precision below 40 digits is
    raised to 40, and doubled once on :class:`MatchFailure`.
    """
    if mp.dps < MIN_PREC:
        with mp.workdps(MIN_PREC):
            return collision_label(q_star, z_star, K, controls, method)
    try:
        return _collision_label(q_star, z_star, K, controls, method)
    except MatchFailure:
        with mp.workdps(2 * mp.dps):
            return _collision_label(q_star, z_star, K, controls, method)


def _collision_label(q_star, z_star, K, controls, method):
    ctl = controls or TrackControls()
    q_star, z_star = to_mpc(q_star), to_mpc(z_star)
    theta, unit = _ray(q_star)
    base = BASE_RADIUS * unit
    back = fwd = None
    steps = 0
    gap = mpmath.inf
    dropped: list = []
    if method in ("backward", "both"):
        back, res, _ = _backward(q_star, z_star, ctl)
        steps += res.steps
        gap = min(gap, res.min_pair_gap)
    if method in ("forward", "both"):
        if K is None:
            K = min(K_CAP, back[1] + 2) if back else 8
        lab = base_labels(theta, K)
        res = continue_radial(lab, ray_point(q_star, theta), ctl)
        a, b, _ = _nearest_pair(res, _Ray(theta), z_star)
        fwd = (a, b)
        steps += res.steps
        gap = min(gap, res.min_pair_gap)
        dropped = [(int(x), int(y), float(r)) for x, y, r in res.dropped]
    if method == "both" and back != fwd:
        raise MatchFailure(f"forward {fwd} and backward {back} continuations disagree")
    i, j = back if back is not None else fwd
    return MonodromyRecord(q_star, z_star, i, j, method, steps, gap, base, dropped, fwd, back)


def ray_angle(q_star) -> mpmath.mpf:
    """Direction of ``q*`` as used for labelling (snapped onto the real axis when close)."""
    return _ray(to_mpc(q_star))[0]


def ray_point(q_star, theta):
    """``q*`` moved exactly onto its (possibly snapped) ray."""
    return abs(q_star) * mpmath.expj(theta)


@dataclass
class DirectionReport:
    a: int
    b: int
    theta: float
    classes: dict
    matches: list
    mismatches: list
    notice: str = ""


def rational_direction_report(a: int, b: int, records: Sequence[MonodromyRecord], angle_tol: float = 1e-6) -> DirectionReport:
    """Tabulate records on the ray ``2 pi a/b`` against the pattern ``(r + m b, r + (m+1) b)``."""
    if b < 1 or math.gcd(a, b) != 1:
        raise ValueError("need gcd(a, b) = 1 and b >= 1")
    theta = 2 * mpmath.pi * a / b
    on_ray = []
    for rec in records:
        ang = mpmath.arg(rec.q_star)
        diff = abs(mpmath.arg(mpmath.expj(ang - theta)))
        if diff <= angle_tol:
            on_ray.append(rec)
    classes: dict[int, list] = {}
    matches, mismatches = [], []
    for rec in on_ray:
        classes.setdefault(rec.i % b, []).append((rec.i, rec.j))
        (matches if rec.j - rec.i == b else mismatches).append((rec.i, rec.j))
    notice = "" if on_ray else f"no candidates on the direction 2*pi*{a}/{b}"
    return DirectionReport(a, b, float(theta), classes, matches, mismatches, notice)


def records_to_json(records: Sequence[MonodromyRecord], digits: int = 20) -> str:
    return json.dumps([r.to_record(digits) for r in records], indent=2) + "\n"


def samples_to_csv(result: TrackResult, digits: int = 20) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["abs_q", "label", "z_re", "z_im"])
    for r, pts in result.samples:
        for k, z in pts:
            w.writerow([fmt(r, digits), k, fmt(z.real, digits), fmt(z.imag, digits)])
    return buf.getvalue()
