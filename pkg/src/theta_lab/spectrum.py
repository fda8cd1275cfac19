"""Truncation-seeded search for double roots of the partial theta function.

Seeds come from the branch points of the finite truncations.  Each seed is
refined by damped Newton iteration on the infinite system
``Theta = d_z Theta = 0``, then filtered, clustered and certified by a
Newton-Kantorovich test with series majorants.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import mpmath
from mpmath import mp

from .core_eval import theta_jet
from .errors import DegreeTooLarge, Diverged, NonConvergence, SingularJacobian, ThetaLabError
from .polyroot import roots_of_coeffs
from .precision import fmt, to_mpc, with_prec
from .trunc_algebra import DISC_DEGREE_CAP, discriminant_exact, truncation_poly

log = logging.getLogger(__name__)

__all__ = [
    "SeedPair",
    "SpectralCandidate",
    "PipelineConfig",
    "PipelineResult",
    "branch_point_seeds",
    "direct_seeds",
    "newton_refine",
    "bounded_root_filter",
    "cluster",
    "certify",
    "run_pipeline",
    "seeds_to_csv",
]


@dataclass(frozen=True)
class SeedPair:
    q: mpmath.mpc
    z: mpmath.mpc
    degree: int
    index: int
    tag: str = "disc"

    @property
    def source(self) -> dict:
        return {"degree": self.degree, "index": self.index, "tag": self.tag}


@dataclass(frozen=True)
class SpectralCandidate:
    q: mpmath.mpc
    z: mpmath.mpc
    residual: mpmath.mpf
    sources: tuple[SeedPair, ...] = ()
    cluster_id: int = -1
    certified: bool = False
    rho: mpmath.mpf | None = None
    rho_unique: mpmath.mpf | None = None
    iterations: int = 0
    seed_shift: float = 0.0
    caustic_suspect: bool = False

    def to_record(self, digits: int = 30) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "q_re": fmt(self.q.real, digits),
            "q_im": fmt(self.q.imag, digits),
            "z_re": fmt(self.z.real, digits),
            "z_im": fmt(self.z.imag, digits),
            "abs_q": fmt(abs(self.q), digits),
            "arg_q": fmt(mpmath.arg(self.q), digits),
            "abs_z": fmt(abs(self.z), digits),
            "residual_log10": fmt(mpmath.log10(self.residual), 6) if self.residual > 0 else None,
            "certified": self.certified,
            "rho": None if self.rho is None else fmt(self.rho, 6),
            "rho_unique": None if self.rho_unique is None else fmt(self.rho_unique, 6),
            "sources": [s.source for s in self.sources],
        }


# ---------------------------------------------------------------- seeds


def _finite_jet(n: int, q, z):
    """Theta_n, d_z, d_q, d_zz, d_qz of the truncation, by direct summation."""
    v = dz = dq = dzz = dqz = mpmath.mpc(0)
    for j in range(n + 1):
        e = j * (j + 1) // 2
        qe = q**e
        v += qe * z**j
        if j >= 1:
            qem1 = q ** (e - 1)
            dz += j * qe * z ** (j - 1)
            dq += e * qem1 * z**j
            dqz += j * e * qem1 * z ** (j - 1)
        if j >= 2:
            dzz += j * (j - 1) * qe * z ** (j - 2)
    return v, dz, dq, dzz, dqz


def _newton_step(v, dz, dq, dzz, dqz):
    det = dq * dzz - dz * dqz
    if det == 0:
        raise SingularJacobian("vanishing Jacobian determinant")
    return (v * dzz - dz * dz) / det, (dq * dz - dqz * v) / det, det


def _pick_double_root(n: int, q, prec: int):
    """Root of ``Theta_n(q, .)`` with the smallest ``|d_z Theta_n|``; ties go to the smallest ``|z|``."""
    with mp.workdps(prec):
        coeffs = [q ** (j * (j + 1) // 2) for j in range(n + 1)]
        rs = roots_of_coeffs(coeffs, cluster_digits=6)
        best = None
        for r in rs.roots:
            d = abs(_finite_jet(n, q, r)[1])
            key = (float(d), float(abs(r)))
            if best is None or key < best[0]:
                best = (key, r)
        return best[1]


def _polish_finite(n: int, q, z, max_halvings: int = 30):
    """One damped Newton step on the finite system; keeps the seed if it does not help."""
    v, dz, dq, dzz, dqz = _finite_jet(n, q, z)
    res = max(abs(v), abs(dz))
    try:
        sq, sz, _ = _newton_step(v, dz, dq, dzz, dqz)
    except SingularJacobian:
        return q, z
    lam = mpmath.mpf(1)
    for _ in range(max_halvings):
        qn, zn = q - lam * sq, z - lam * sz
        vn, dzn = _finite_jet(n, qn, zn)[:2]
        if max(abs(vn), abs(dzn)) < res:
            return qn, zn
        lam /= 2
    return q, z


def branch_point_seeds(n: int, radius=0.82, prec: int = 30) -> list[SeedPair]:
    """Seeds ``(q, z)`` from the exact discriminant of ``Theta_n``.

    Every root ``q`` of the squarefree parts of the reduced discriminant with
    ``0 < |q| < radius`` is paired with the near-multiple root of
    ``Theta_n(q, .)``.  Degrees above the exact cap fall back to
    :func:`direct_seeds`.
    """
    if n > DISC_DEGREE_CAP:
        return direct_seeds(n, radius, prec=prec)
    if n < 2:
        return []
    radius = mpmath.mpf(radius)
    disc = discriminant_exact(truncation_poly(n))
    _, factors = disc.as_fmpz_poly().factor_squarefree()
    qs = []
    with mp.workdps(prec):
        for f, _mult in factors:
            coeffs = [int(c) for c in f.coeffs()]
            if len(coeffs) < 2:
                continue
            qs.extend(r for r in roots_of_coeffs(coeffs).roots if 0 < abs(r) < radius)
        qs.sort(key=lambda r: (float(abs(r)), float(mpmath.arg(r))))
        seeds = []
        for i, q in enumerate(qs):
            z = _pick_double_root(n, q, prec)
            q2, z2 = _polish_finite(n, q, z)
            seeds.append(SeedPair(q2, z2, n, i, "disc"))
    return seeds


def _term_scale(n: int, q, z):
    aq, az = abs(q), abs(z)
    return mpmath.fsum(j * aq ** (j * (j + 1) // 2) * az ** max(j - 1, 0) for j in range(n + 1)) + 1


def direct_seeds(n: int, radius=0.82, prec: int = 30, rings: int = 12, spokes: int = 48,
                 max_iter: int = 40) -> list[SeedPair]:
    """Multi-start Newton on the finite system ``Theta_n = d_z Theta_n = 0``.

    Starts from a polar grid of ``q`` values paired with every root of
    ``Theta_n(q, .)``.  Converged solutions inside ``|q| < radius`` are
    de-duplicated at ``1e-8``.
    """
    radius = mpmath.mpf(radius)
    found: list[tuple] = []
    with mp.workdps(prec):
        tol = mpmath.mpf(10) ** (-(prec - 8))
        for a in range(1, rings + 1):
            rr = radius * a / (rings + 1)
            for b in range(spokes):
                q0 = rr * mpmath.expj(2 * mpmath.pi * (b + mpmath.mpf(1) / 2) / spokes)
                coeffs = [q0 ** (j * (j + 1) // 2) for j in range(n + 1)]
                for z0 in roots_of_coeffs(coeffs, cluster_digits=6).roots:
                    q, z = q0, z0
                    for _ in range(max_iter):
                        jet = _finite_jet(n, q, z)
                        if max(abs(jet[0]), abs(jet[1])) <= tol * _term_scale(n, q, z):
                            break
                        try:
                            sq, sz, _ = _newton_step(*jet)
                        except SingularJacobian:
                            break
                        q, z = q - sq, z - sz
                        if abs(q) >= 1 or abs(z) > 1e6:
                            break
                    else:
                        continue
                    if not (0 < abs(q) < radius):
                        continue
                    jet = _finite_jet(n, q, z)
                    if max(abs(jet[0]), abs(jet[1])) > tol * _term_scale(n, q, z):
                        continue
                    if any(abs(q - f[0]) < 1e-8 and abs(z - f[1]) < 1e-8 for f in found):
                        continue
                    found.append((q, z))
    found.sort(key=lambda p: (float(abs(p[0])), float(mpmath.arg(p[0])), float(abs(p[1]))))
    return [SeedPair(q, z, n, i, "direct") for i, (q, z) in enumerate(found)]


# ---------------------------------------------------------------- refinement


def _snap_real(q, z, jet, res):
    # Real solutions come back with noise-level imaginary parts; drop them
    # when that does not raise the residual.
    small = mpmath.mpf(10) ** (-(mp.dps // 2))
    if abs(q.imag) > small * abs(q) or abs(z.imag) > small * abs(z):
        return q, z, jet, res
    qr, zr = mpmath.mpc(q.real), mpmath.mpc(z.real)
    jr = theta_jet(qr, zr)
    if jr.residual() <= max(res, mpmath.mpf(10) ** (-(mp.dps - 5))):
        return qr, zr, jr, jr.residual()
    return q, z, jet, res


@with_prec
def newton_refine(seed: SeedPair, tol=None, max_iter: int = 60, q_guard=0.95, z_guard=1e4,
                  det_floor=None) -> SpectralCandidate:
    """Damped Newton on ``(Theta, d_z Theta)`` for the infinite series.

    The step is halved while the residual does not decrease.  Once the
    residual is below ``tol`` one more full step is taken and the candidate
    returned.
    """
    tol = mpmath.mpf("1e-30") if tol is None else mpmath.mpf(tol)
    det_floor = mpmath.mpf(10) ** (-(mp.dps - 10)) if det_floor is None else mpmath.mpf(det_floor)
    q0, z0 = to_mpc(seed.q), to_mpc(seed.z)
    q, z = q0, z0
    if abs(q) >= q_guard:
        raise Diverged(f"seed |q| = {float(abs(q)):.4f} is outside the guard radius")
    jet = theta_jet(q, z)
    res = jet.residual()
    for it in range(max_iter + 1):
        if res <= tol:
            sq, sz, det = _newton_step(jet.value, jet.dz, jet.dq, jet.dzz, jet.dqz)
            qn, zn = q - sq, z - sz
            jn = theta_jet(qn, zn)
            if jn.residual() <= res:
                q, z, jet, res = qn, zn, jn, jn.residual()
            q, z, jet, res = _snap_real(q, z, jet, res)
            shift = float(abs(z - z0) / abs(z)) if z != 0 else 0.0
            return SpectralCandidate(q, z, res, (seed,), iterations=it, seed_shift=shift)
        if it == max_iter:
            break
        sq, sz, det = _newton_step(jet.value, jet.dz, jet.dq, jet.dzz, jet.dqz)
        scale = max(abs(jet.dq * jet.dzz), abs(jet.dz * jet.dqz))
        if abs(det) <= det_floor * scale:
            raise SingularJacobian(f"Jacobian determinant {mpmath.nstr(abs(det), 5)} below threshold")
        lam = mpmath.mpf(1)
        while True:
            qn, zn = q - lam * sq, z - lam * sz
            if abs(qn) < q_guard and abs(zn) < z_guard:
                jn = theta_jet(qn, zn)
                if jn.residual() < res:
                    break
            lam /= 2
            if lam < mpmath.mpf(2) ** -30:
                raise Diverged("step damping underflow")
        q, z, jet, res = qn, zn, jn, jn.residual()
    raise Diverged(f"no convergence in {max_iter} iterations (residual {mpmath.nstr(res, 3)})")


def bounded_root_filter(cands: Iterable[SpectralCandidate], R=25,
                        suspects: list | None = None) -> list[SpectralCandidate]:
    """Keep candidates with ``|z| <= R``; the rest go to ``suspects`` tagged as caustic suspects."""
    R = mpmath.mpf(R)
    kept = []
    for c in cands:
        if abs(c.z) <= R:
            kept.append(c)
        elif suspects is not None:
            suspects.append(replace(c, caustic_suspect=True))
    return kept


def _order_key(c: SpectralCandidate):
    return (float(abs(c.q)), float(mpmath.arg(c.q)), float(abs(c.z)))


def cluster(cands: Sequence[SpectralCandidate], eps=1e-8) -> list[SpectralCandidate]:
    """Union-find on ``max(|dq|, |dz|) < eps``; one smallest-residual representative per class."""
    eps = mpmath.mpf(eps)
    items = list(cands)
    parent = list(range(len(items)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if max(abs(items[i].q - items[j].q), abs(items[i].z - items[j].z)) < eps:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(items)):
        groups.setdefault(find(i), []).append(i)
    reps = []
    for members in groups.values():
        best = min(members, key=lambda k: (items[k].residual, k))
        srcs = sorted(
            {s for k in members for s in items[k].sources},
            key=lambda s: (s.degree, s.index, s.tag),
        )
        reps.append(replace(items[best], sources=tuple(srcs)))
    reps.sort(key=_order_key)
    return [replace(c, cluster_id=i) for i, c in enumerate(reps)]


# ---------------------------------------------------------------- certification


def _majorant(a: int, b: int, Q, Z, tol=None) -> mpmath.mpf:
    """Upper bound for ``sum_j [e_j]_a [j]_b Q**(e_j - a) Z**(j - b)`` with ``e_j = j(j+1)/2``.

    ``[x]_k`` is the falling factorial.  This dominates the modulus of the
    ``(a, b)`` mixed derivative of Theta on the polydisk ``|q| <= Q``,
    ``|z| <= Z``.  The tail is closed by a geometric bound once the term
    ratio stays below 1/2.
    """
    Q = mpmath.mpf(Q)
    Z = mpmath.mpf(Z)
    tol = mpmath.mpf(10) ** (-mp.dps) if tol is None else tol
    total = mpmath.mpf(0)
    j = 0
    while True:
        e = j * (j + 1) // 2
        w = mpmath.ff(e, a) * mpmath.ff(j, b)
        if w != 0:
            total += w * Q ** (e - a) * Z ** (j - b)
        if j >= 2 and e >= a + 1 and j >= b + 1:
            # the tail is dominated by weights e**a * j**b, whose ratio beyond j
            # is at most ((j+2)/j)**(2a+b)
            rho = Q ** (j + 2) * Z * (mpmath.mpf(j + 2) / j) ** (2 * a + b)
            if rho <= mpmath.mpf(1) / 2:
                e1 = (j + 1) * (j + 2) // 2
                nxt = mpmath.mpf(e1) ** a * (j + 1) ** b * Q ** (e1 - a) * Z ** (j + 1 - b)
                if nxt <= tol * max(total, 1):
                    return total + 2 * nxt
        j += 1
        if j > 100000:
            return mpmath.inf


def _inv_norm_inf(J):
    (a, b), (c, d) = J
    det = a * d - b * c
    if det == 0:
        return mpmath.inf
    return max(abs(d) + abs(b), abs(c) + abs(a)) / abs(det)


@with_prec
def certify(c: SpectralCandidate, ball=None, min_residual=1e-20) -> SpectralCandidate:
    """Newton-Kantorovich test in the max-norm on ``C**2``.

    With ``beta >= ||J0^-1||``, ``eta >= ||J0^-1 F(x0)||`` and ``L`` a
    Lipschitz constant of ``J`` on the ball of radius ``R`` (from the
    majorant series of the second derivatives), ``h = beta*eta*L <= 1/2``
    gives a zero within ``rho = (1 - sqrt(1-2h))/(beta L)`` that is unique
    within ``min(R, (1 + sqrt(1-2h))/(beta L))``.  Evaluation errors enter
    ``F`` and ``J0`` through the series tail bound plus a rounding margin of
    ``10**(3-dps)`` times the absolute-term sums.
    """
    q, z = to_mpc(c.q), to_mpc(c.z)
    fail = replace(c, certified=False, rho=None, rho_unique=None)
    if not (c.residual < mpmath.mpf(min_residual)) or abs(q) >= 1:
        return fail
    aq, az = abs(q), abs(z)
    R = mpmath.mpf(ball) if ball is not None else min(mpmath.mpf("1e-3"), (1 - aq) / 4)
    try:
        jet = theta_jet(q, z)
    except ThetaLabError:
        return fail
    margin = mpmath.mpf(10) ** (3 - mp.dps)
    # absolute sums at the centre, for the rounding margin of each entry
    abs_sums = {ab: _majorant(*ab, aq, az) for ab in [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1)]}
    if any(v == mpmath.inf for v in abs_sums.values()):
        return fail
    err = {ab: jet.tail_bound + margin * v for ab, v in abs_sums.items()}
    F_err = max(err[(0, 0)], err[(0, 1)])
    J_err = max(err[(1, 0)] + err[(0, 1)], err[(1, 1)] + err[(0, 2)])
    J0 = ((jet.dq, jet.dz), (jet.dqz, jet.dzz))
    beta0 = _inv_norm_inf(J0)
    if beta0 == mpmath.inf or beta0 * J_err >= mpmath.mpf(1) / 2:
        return fail
    beta = beta0 / (1 - beta0 * J_err)
    eta = beta * (max(abs(jet.value), abs(jet.dz)) + F_err)
    Q, Z = aq + R, az + R
    if Q >= 1:
        return fail
    m = {ab: _majorant(*ab, Q, Z) for ab in [(2, 0), (1, 1), (0, 2), (2, 1), (1, 2), (0, 3)]}
    # row 1 of J is (T_q, T_z), row 2 is (T_qz, T_zz); each entry's gradient in (q, z)
    L1 = m[(2, 0)] + m[(1, 1)] + m[(1, 1)] + m[(0, 2)]
    L2 = m[(2, 1)] + m[(1, 2)] + m[(1, 2)] + m[(0, 3)]
    L = max(L1, L2)
    if not mpmath.isfinite(L):
        return fail
    h = beta * eta * L
    if h > mpmath.mpf(1) / 2:
        return fail
    root = mpmath.sqrt(1 - 2 * h)
    rho_minus = (1 - root) / (beta * L) if L > 0 else eta
    rho_plus = (1 + root) / (beta * L) if L > 0 else mpmath.inf
    if rho_minus > R:
        return fail
    return replace(c, certified=True, rho=rho_minus, rho_unique=min(R, rho_plus))


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class PipelineConfig:
    degrees: tuple[int, ...] = (8, 10, 12, 14)
    radius: float = 0.82
    retain: float = 0.8
    prec: int = 50
    seed_prec: int = 30
    tol: float = 1e-30
    bound_R: float = 25.0
    cluster_eps: float = 1e-8
    max_seed_shift: float = float("inf")
    max_iter: int = 60
    do_certify: bool = True
    workers: int = 1


@dataclass
class PipelineResult:
    candidates: list[SpectralCandidate]
    suspects: list[SpectralCandidate] = field(default_factory=list)
    nonlocal_: list[SpectralCandidate] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    n_seeds: int = 0
    seeds: list[SeedPair] = field(default_factory=list)

    def to_json(self, digits: int = 30) -> str:
        """Candidate records only, in table order."""
        return json.dumps([c.to_record(digits) for c in self.candidates], indent=2) + "\n"

    def report_json(self, digits: int = 30) -> str:
        """Candidates plus caustic suspects, non-local points and seed failures."""
        doc = {
            "candidates": [c.to_record(digits) for c in self.candidates],
            "caustic_suspects": [c.to_record(digits) for c in self.suspects],
            "nonlocal": [c.to_record(digits) for c in self.nonlocal_],
            "failures": self.failures,
            "n_seeds": self.n_seeds,
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self, digits: int = 30) -> str:
        buf = io.StringIO()
        cols = ["cluster_id", "q_re", "q_im", "z_re", "z_im", "abs_q", "arg_q", "abs_z", "residual_log10",
                "certified", "rho", "rho_unique", "sources"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for c in self.candidates:
            rec = c.to_record(digits)
            rec["sources"] = ";".join(f"{s['degree']}:{s['index']}" for s in rec["sources"])
            w.writerow([rec[k] for k in cols])
        return buf.getvalue()


def seeds_to_csv(seeds: Sequence[SeedPair], digits: int = 20) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["degree", "index", "tag", "q_re", "q_im", "z_re", "z_im"])
    for s in seeds:
        w.writerow([s.degree, s.index, s.tag, fmt(s.q.real, digits), fmt(s.q.imag, digits),
                    fmt(s.z.real, digits), fmt(s.z.imag, digits)])
    return buf.getvalue()


def _seed_job(args):
    n, radius, prec = args
    return branch_point_seeds(n, radius, prec=prec)


def _refine_job(args):
    seed, cfg = args
    try:
        cand = newton_refine(seed, tol=cfg.tol, max_iter=cfg.max_iter, prec=cfg.prec)
        return cand, None
    except (Diverged, SingularJacobian, NonConvergence) as exc:
        return None, {"degree": seed.degree, "index": seed.index, "error": type(exc).__name__, "detail": str(exc)}


def _certify_job(args):
    cand, prec = args
    return certify(cand, prec=prec)


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def run_pipeline(cfg: PipelineConfig | None = None) -> PipelineResult:
    """Seeds, refinement, locality gate, bounded-root filter, clustering and certification.

    Refined points whose ``z`` moved by more than ``max_seed_shift``
    (relative) from the seed are not attributed to that seed; they are
    clustered separately in ``nonlocal_``.  Output does not depend on
    ``workers``: every parallel stage is an ordered map.
    """
    cfg = cfg or PipelineConfig()
    seed_lists = _map(_seed_job, [(n, cfg.radius, cfg.seed_prec) for n in cfg.degrees], cfg.workers)
    seeds = [s for lst in seed_lists for s in lst]
    outcomes = _map(_refine_job, [(s, cfg) for s in seeds], cfg.workers)
    refined, failures = [], []
    for cand, fail in outcomes:
        if fail is not None:
            failures.append(fail)
        else:
            refined.append(cand)
    retain = mpmath.mpf(cfg.retain)
    inside = [c for c in refined if abs(c.q) <= retain]
    local = [c for c in inside if c.seed_shift <= cfg.max_seed_shift]
    far = [c for c in inside if c.seed_shift > cfg.max_seed_shift]
    suspects: list[SpectralCandidate] = []
    kept = bounded_root_filter(local, cfg.bound_R, suspects)
    table = cluster(kept, cfg.cluster_eps)
    far_table = cluster(bounded_root_filter(far, cfg.bound_R, suspects), cfg.cluster_eps)
    # a far point that coincides with a table entry adds nothing new
    far_table = [
        f for f in far_table
        if not any(max(abs(f.q - t.q), abs(f.z - t.z)) < cfg.cluster_eps for t in table)
    ]
    if cfg.do_certify:
        table = _map(_certify_job, [(c, cfg.prec) for c in table], cfg.workers)
    return PipelineResult(table, cluster(suspects, cfg.cluster_eps), far_table, failures, len(seeds), seeds)
