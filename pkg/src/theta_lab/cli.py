"""``theta-lab`` command line.

Every subcommand writes one document (JSON or CSV) to ``--out`` or stdout.
Numbers are written as decimal strings with a fixed digit count, and rows
come out in a fixed order, so reruns with the same settings are byte
identical whatever ``--workers`` is.

Exit codes: 0 success, 2 usage error, 3 some items failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import random
import sys
from pathlib import Path

import mpmath
from mpmath import mp

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_int_list, resolve_precision
from .errors import ThetaLabError
from .precision import fmt, parse_complex

log = logging.getLogger("theta_lab")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARTIAL = 3
DIGITS = 30
STATS_M_CAP = 64


class UsageError(Exception):
    pass


def _cplx(z, digits: int = DIGITS) -> dict:
    z = mpmath.mpc(z)
    return {"re": fmt(z.real, digits), "im": fmt(z.imag, digits)}


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _flat_csv(doc: dict) -> str:
    rows = []

    def walk(prefix, v):
        if isinstance(v, dict):
            for k, x in v.items():
                walk(f"{prefix}.{k}" if prefix else str(k), x)
        else:
            rows.append([prefix, v])

    walk("", doc)
    return _rows_to_csv(["key", "value"], rows)


def _emit(args, cfg: RunConfig, text: str, path: str | None = None) -> None:
    target = path if path is not None else args.out
    if target is None or target == "-":
        sys.stdout.write(text)
        return
    p = Path(target)
    if not p.is_absolute() and cfg.output_dir not in ("", "."):
        p = Path(cfg.output_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


# ---------------------------------------------------------------- eval


def cmd_eval(args, cfg: RunConfig) -> int:
    from .core_eval import psi_eval, theta_jet, window_jet

    tol = mpmath.mpf(args.tol) if args.tol else None
    kind = args.what
    vals = args.values
    if kind == "theta":
        if len(vals) != 2:
            raise UsageError("eval theta needs q z")
        q, z = parse_complex(vals[0]), parse_complex(vals[1])
        jet = theta_jet(q, z, tol=tol)
        doc = {
            "kind": "theta",
            "q": _cplx(q), "z": _cplx(z),
            "value": _cplx(jet.value), "dz": _cplx(jet.dz), "dq": _cplx(jet.dq),
            "dzz": _cplx(jet.dzz), "dqz": _cplx(jet.dqz),
            "terms_used": jet.terms_used, "tail_bound": fmt(jet.tail_bound, 6),
        }
    elif kind == "window":
        if len(vals) != 3:
            raise UsageError("eval window needs q u N")
        q, u = parse_complex(vals[0]), parse_complex(vals[1])
        try:
            N = int(vals[2])
        except ValueError:
            raise UsageError("N must be an integer") from None
        jet = window_jet(q, u, N, tol=tol)
        doc = {
            "kind": "window", "q": _cplx(q), "u": _cplx(u), "N": N,
            "h": _cplx(jet.h), "hu": _cplx(jet.hu), "huu": _cplx(jet.huu), "huuu": _cplx(jet.huuu),
            "hq": _cplx(jet.hq), "hqu": _cplx(jet.hqu),
            "terms_used": jet.terms_used, "tail_bound": fmt(jet.tail_bound, 6),
        }
    elif kind == "psi":
        if len(vals) != 1:
            raise UsageError("eval psi needs q")
        q = parse_complex(vals[0])
        t = tol if tol is not None else mpmath.mpf(10) ** (-mp.dps)
        s = psi_eval(q, tol=t, mode="series")
        p = psi_eval(q, tol=t, mode="product")
        diff = abs(s - p)
        doc = {
            "kind": "psi", "q": _cplx(q), "series": _cplx(s), "product": _cplx(p),
            "difference": fmt(diff, 6), "tol": fmt(t, 6), "agree": bool(diff <= 2 * t),
        }
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(kind)
    _emit(args, cfg, _dump_json(doc) if cfg.format == "json" else _flat_csv(doc))
    return EXIT_OK


# ---------------------------------------------------------------- table


def cmd_table(args, cfg: RunConfig) -> int:
    from .spectrum import PipelineConfig, run_pipeline, seeds_to_csv

    degrees = parse_int_list(args.degrees) if args.degrees else cfg.degrees
    if not degrees or min(degrees) < 2:
        raise UsageError("degrees must be integers >= 2")
    pc = PipelineConfig(
        degrees=tuple(degrees),
        radius=float(args.radius or cfg.radius("seed")),
        retain=float(args.retain or cfg.radius("retain")),
        prec=cfg.precision_digits,
        tol=float(args.tol or cfg.tol("newton")),
        bound_R=float(cfg.radius("bound")),
        cluster_eps=float(cfg.tol("cluster")),
        workers=cfg.workers,
    )
    with mp.workdps(cfg.precision_digits):
        res = run_pipeline(pc)
    for f in res.failures:
        log.warning("seed %s:%s failed: %s", f["degree"], f["index"], f["error"])
    _emit(args, cfg, res.to_json(DIGITS) if cfg.format == "json" else res.to_csv(DIGITS))
    if args.seeds_csv:
        _emit(args, cfg, seeds_to_csv(res.seeds), args.seeds_csv)
    if args.report:
        _emit(args, cfg, res.report_json(DIGITS), args.report)
    return EXIT_OK if all(c.certified for c in res.candidates) else EXIT_PARTIAL


# ---------------------------------------------------------------- monodromy


def _num(rec: dict, key: str):
    if f"{key}_re" in rec:
        return mpmath.mpc(mpmath.mpf(str(rec[f"{key}_re"])), mpmath.mpf(str(rec.get(f"{key}_im", "0"))))
    if key in rec:
        v = rec[key]
        if isinstance(v, dict):
            return mpmath.mpc(mpmath.mpf(str(v["re"])), mpmath.mpf(str(v["im"])))
        if isinstance(v, (list, tuple)):
            return mpmath.mpc(mpmath.mpf(str(v[0])), mpmath.mpf(str(v[1])))
        return parse_complex(str(v))
    raise UsageError(f"candidate record lacks {key}")


def read_candidates(path: str) -> list[tuple[mpmath.mpc, mpmath.mpc]]:
    """Candidates from a ``table`` JSON/CSV file or a plain JSON list of records."""
    text = Path(path).read_text()
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = list(csv.DictReader(io.StringIO(text)))
    if isinstance(doc, dict):
        doc = doc.get("candidates", [])
    return [(_num(r, "q"), _num(r, "z")) for r in doc]


def read_expected(path: str) -> list:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = [line.replace(",", " ").split() for line in text.splitlines() if line.strip()]
    out = []
    for item in doc:
        if item is None:
            out.append(None)
        elif isinstance(item, dict):
            out.append((int(item["i"]), int(item["j"])))
        else:
            out.append((int(item[0]), int(item[1])))
    return out


def cmd_monodromy(args, cfg: RunConfig) -> int:
    from .monodromy import base_labels, collision_label, continue_radial, ray_angle, ray_point, samples_to_csv

    cands = read_candidates(args.candidates)
    expected = read_expected(args.expected) if args.expected else None
    if expected is not None and len(expected) != len(cands):
        raise UsageError("expected-labels file must have one entry per candidate")
    prec = max(cfg.precision_digits, 40)
    records, failures, paths = [], [], []
    with mp.workdps(prec):
        for idx, (q, z) in enumerate(cands):
            try:
                rec = collision_label(q, z, method=args.method)
            except ThetaLabError as exc:
                log.warning("record %d failed: %s", idx, exc)
                failures.append({"index": idx, "error": type(exc).__name__, "detail": str(exc)})
                continue
            entry = {"index": idx, **rec.to_record(20)}
            if expected is not None and expected[idx] is not None:
                entry["expected"] = list(expected[idx])
                entry["match"] = rec.transposition == expected[idx]
            records.append(entry)
            if args.paths_csv:
                theta = ray_angle(q)
                lab = base_labels(theta, max(rec.j + 2, 4))
                tr = continue_radial(lab, ray_point(q, theta), keep_samples=True)
                body = samples_to_csv(tr).splitlines()
                paths.extend(f"{idx},{line}" for line in body[1:])
    summary = {"n": len(cands), "labelled": len(records), "failed": len(failures)}
    if expected is not None:
        summary["matches"] = sum(1 for r in records if r.get("match"))
        summary["compared"] = sum(1 for r in records if "match" in r)
    doc = {"records": records, "failures": failures, "summary": summary}
    if cfg.format == "json":
        text = _dump_json(doc)
    else:
        cols = ["index", "i", "j", "method", "path_steps", "min_pair_gap"]
        text = _rows_to_csv(cols + ["q_re", "q_im", "z_re", "z_im"],
                            [[r[c] for c in cols] + r["q_star"] + r["z_star"] for r in records])
    _emit(args, cfg, text)
    if args.paths_csv:
        _emit(args, cfg, "record,abs_q,label,z_re,z_im\n" + "".join(p + "\n" for p in paths), args.paths_csv)
    bad = failures or (expected is not None and summary["matches"] != summary["compared"])
    return EXIT_PARTIAL if bad else EXIT_OK


# ---------------------------------------------------------------- boundary


def cmd_boundary(args, cfg: RunConfig) -> int:
    from .boundary import WindowParams, choose_residue, lift_solution

    a, b = args.a, args.b
    if b < 1 or math.gcd(a, b) != 1:
        raise UsageError("need b >= 1 and gcd(a, b) = 1")
    tol = mpmath.mpf(args.tol or cfg.tol("lift"))
    with mp.workdps(cfg.precision_digits):
        r, _ = choose_residue(a, b)
        sols, fails = [], []
        for N in args.N:
            if N % b != r:
                fails.append({"N": N, "error": "ResidueMismatch", "detail": f"N must be {r} mod {b}"})
                continue
            try:
                sols.append(lift_solution(WindowParams(a, b, N, r), tol=tol))
            except ThetaLabError as exc:
                log.warning("N = %d failed: %s", N, exc)
                fails.append({"N": N, "error": type(exc).__name__, "detail": str(exc)})
    dists = [s.dist_to_omega for s in sorted(sols, key=lambda s: s.params.N)]
    trend = all(x > y for x, y in zip(dists, dists[1:]))
    recs = [s.to_record(DIGITS) for s in sols]
    doc = {"a": a, "b": b, "r": r, "solutions": recs, "failures": fails,
           "dist_to_omega_decreasing": trend}
    if cfg.format == "json":
        text = _dump_json(doc)
    else:
        cols = list(recs[0]) if recs else ["a", "b", "r", "N"]
        text = _rows_to_csv(cols, [[x[c] for c in cols] for x in recs])
    _emit(args, cfg, text)
    return EXIT_PARTIAL if fails else EXIT_OK


# ---------------------------------------------------------------- stats


def cmd_stats(args, cfg: RunConfig) -> int:
    from .polyroot import distribution_report, roots_all
    from .trunc_algebra import psi_section_int

    ms = args.m
    if any(m < 1 for m in ms):
        raise UsageError("m must be positive")
    if max(ms) > args.max_m:
        raise UsageError(f"m above the cap {args.max_m} (raise it with --max-m)")
    reports, root_rows = [], []
    with mp.workdps(cfg.precision_digits):
        for m in ms:
            p = psi_section_int(m)
            rs = roots_all(p)
            rep = distribution_report(rs)
            pts = rs.expanded()
            reports.append({
                "m": m,
                "degree": p.degree + p.q_shift,
                "n_roots": rep.n_roots,
                "discrepancy": fmt(rep.discrepancy, 12),
                "radial_fraction": {f"{e}": fmt(v, 12) for e, v in rep.radial_fraction.items()},
                "inner_count": {f"{r}": v for r, v in rep.inner_count.items()},
                "min_abs": fmt(min(abs(x) for x in pts), 12),
                "max_abs": fmt(max(abs(x) for x in pts), 12),
            })
            body = rs.to_csv(DIGITS).splitlines()
            root_rows.extend(f"{m},{line}" for line in body[1:])
    discs = [mpmath.mpf(r["discrepancy"]) for r in reports]
    trend = all(y <= x * mpmath.mpf("1.1") for x, y in zip(discs, discs[1:]))
    roots_csv = "m,re,im,abs,arg,multiplicity\n" + "".join(r + "\n" for r in root_rows)
    if cfg.format == "json":
        text = _dump_json({"reports": reports, "discrepancy_non_increasing": trend})
    else:
        text = roots_csv
    _emit(args, cfg, text)
    if args.roots_csv:
        _emit(args, cfg, roots_csv, args.roots_csv)
    return EXIT_OK


# ---------------------------------------------------------------- checks


def cmd_even_fact(args, cfg: RunConfig) -> int:
    from .trunc_algebra import even_factorization_check

    rows = []
    for m in args.m:
        ef = even_factorization_check(m)
        rows.append({
            "m": m, "holds": ef.holds, "unit_sign": ef.unit_sign, "unit_t_power": ef.unit_t_power,
            "disc_R_degree": ef.disc_R.degree(), "C_degree": ef.C_t.degree(), "B_degree": ef.B_t.degree(),
        })
    if cfg.format == "json":
        text = _dump_json(rows)
    else:
        cols = list(rows[0]) if rows else ["m"]
        text = _rows_to_csv(cols, [[r[c] for c in cols] for r in rows])
    _emit(args, cfg, text)
    return EXIT_OK if all(r["holds"] for r in rows) else EXIT_PARTIAL


def cmd_outer_check(args, cfg: RunConfig) -> int:
    from .polyroot import outer_simplicity_check

    qs = [parse_complex(s) for s in args.q]
    if args.sample:
        rng = random.Random(args.seed)
        R = mpmath.mpf(args.modulus)
        qs += [R * mpmath.expj(2 * mpmath.pi * mpmath.mpf(rng.random())) for _ in range(args.sample)]
    if not qs:
        raise UsageError("give q values or --sample")
    rows = []
    with mp.workdps(cfg.precision_digits):
        for q in qs:
            v = outer_simplicity_check(args.n, q)
            rows.append({
                "q_re": fmt(q.real, 20), "q_im": fmt(q.imag, 20), "n": v.n, "verdict": v.verdict,
                "coefficient_sum": fmt(v.coefficient_sum, 12), "eps0": fmt(v.eps0, 6),
                "min_separation": None if v.min_separation is None else fmt(v.min_separation, 6),
            })
    if cfg.format == "json":
        text = _dump_json(rows)
    else:
        cols = list(rows[0])
        text = _rows_to_csv(cols, [[r[c] for c in cols] for r in rows])
    _emit(args, cfg, text)
    return EXIT_OK


def cmd_jensen_check(args, cfg: RunConfig) -> int:
    from .trunc_algebra import jensen_identity_check

    with mp.workdps(cfg.precision_digits):
        q, z = parse_complex(args.q), parse_complex(args.z)
        res = jensen_identity_check(args.n, q, z)
        bound = mpmath.mpf(10) ** (-(cfg.precision_digits - 5))
    doc = {"n": args.n, "q": _cplx(q, 20), "z": _cplx(z, 20), "residual": fmt(res, 6),
           "bound": fmt(bound, 6), "holds": bool(res < bound)}
    _emit(args, cfg, _dump_json(doc) if cfg.format == "json" else _flat_csv(doc))
    return EXIT_OK if doc["holds"] else EXIT_PARTIAL


# ---------------------------------------------------------------- parser


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--prec", type=int, default=d, help="working precision in digits (THETA_LAB_PREC overrides)")
    parser.add_argument("--tol", default=d, help="main tolerance of the subcommand")
    parser.add_argument("--out", default=d, help="output file (default stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default=d)
    parser.add_argument("--workers", type=int, default=d)
    parser.add_argument("--config", default=d, help="key = value run configuration")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="theta-lab", description="Spectral points of the partial theta function.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate theta, the window function, or psi")
    p.add_argument("what", choices=("theta", "window", "psi"))
    p.add_argument("values", nargs="+")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("table", parents=[common], help="refined and certified spectral candidates")
    p.add_argument("--degrees", help="comma separated truncation degrees")
    p.add_argument("--radius", help="seed radius")
    p.add_argument("--retain", help="keep candidates with |q| <= retain")
    p.add_argument("--seeds-csv", help="also write the raw branch-point seeds here")
    p.add_argument("--report", help="also write candidates, suspects and seed failures as JSON here")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("monodromy", parents=[common], help="radial collision labels")
    p.add_argument("candidates")
    p.add_argument("expected", nargs="?", help="optional expected labels, one pair per candidate")
    p.add_argument("--method", choices=("both", "forward", "backward"), default="both")
    p.add_argument("--paths-csv", help="write the tracked root paths here")
    p.set_defaults(func=cmd_monodromy)

    p = sub.add_parser("boundary", parents=[common], help="spectral points near a root of unity")
    p.add_argument("a", type=int)
    p.add_argument("b", type=int)
    p.add_argument("N", type=int, nargs="+")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("stats", parents=[common], help="zero statistics of the central factors")
    p.add_argument("m", type=int, nargs="+")
    p.add_argument("--max-m", type=int, default=STATS_M_CAP)
    p.add_argument("--roots-csv", help="also write the roots here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("even-fact", parents=[common], help="exact even discriminant factorization")
    p.add_argument("m", type=int, nargs="+")
    p.set_defaults(func=cmd_even_fact)

    p = sub.add_parser("outer-check", parents=[common], help="simple-zero test outside the unit disk")
    p.add_argument("n", type=int)
    p.add_argument("q", nargs="*")
    p.add_argument("--sample", type=int, default=0, help="add this many random q on |q| = modulus")
    p.add_argument("--modulus", default="1.5")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_outer_check)

    p = sub.add_parser("jensen-check", parents=[common], help="Jensen/truncation identity residual")
    p.add_argument("n", type=int)
    p.add_argument("q")
    p.add_argument("z")
    p.set_defaults(func=cmd_jensen_check)
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    kw = {}
    if args.format:
        kw["format"] = args.format
    if args.workers:
        kw["workers"] = args.workers
    if kw:
        from dataclasses import replace

        cfg = replace(cfg, **kw)
    return resolve_precision(cfg, args.prec)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _run_config(args)
        with mp.workdps(cfg.precision_digits):
            return args.func(args, cfg)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"theta-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ThetaLabError as exc:
        print(f"theta-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
