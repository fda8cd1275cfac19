"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment.  ``include = path`` reads
another file (relative to the including one) at that point, so later keys
override it.  Recognized keys::

    precision_digits = 50
    degrees = 8, 10, 12, 14
    radius.seed = 0.82
    radius.retain = 0.8
    radius.bound = 25
    tol.newton = 1e-30
    tol.cluster = 1e-8
    output_dir = out
    format = json
    workers = 1
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .precision import DEFAULT_PREC, MIN_PREC, PREC_ENV

DEFAULT_TOLERANCES = {
    "newton": "1e-30",
    "cluster": "1e-8",
    "lift": "1e-20",
    "certify_residual": "1e-20",
}
DEFAULT_RADII = {"seed": "0.82", "retain": "0.8", "bound": "25"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    precision_digits: int = DEFAULT_PREC
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    degrees: tuple[int, ...] = (8, 10, 12, 14)
    radii: dict = field(default_factory=lambda: dict(DEFAULT_RADII))
    output_dir: str = "."
    format: str = "json"
    workers: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if self.precision_digits < MIN_PREC:
            raise ConfigError(f"precision_digits must be at least {MIN_PREC}")
        for name, val in self.tolerances.items():
            if not float(val) > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def tol(self, name: str) -> str:
        return self.tolerances[name]

    def radius(self, name: str) -> str:
        return self.radii[name]


def _read_pairs(path: Path, seen: tuple[Path, ...] = ()) -> list[tuple[str, str]]:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"include cycle through {path}")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "include":
            pairs.extend(_read_pairs(path.parent / value, seen + (path,)))
        else:
            pairs.append((key, value))
    return pairs


def apply_pairs(cfg: RunConfig, pairs) -> RunConfig:
    tols = dict(cfg.tolerances)
    radii = dict(cfg.radii)
    kw: dict = {}
    for key, value in pairs:
        if key.startswith("tol."):
            tols[key[4:]] = value
        elif key.startswith("radius."):
            radii[key[7:]] = value
        elif key == "precision_digits":
            kw["precision_digits"] = int(value)
        elif key == "degrees":
            kw["degrees"] = parse_int_list(value)
        elif key == "output_dir":
            kw["output_dir"] = value
        elif key == "format":
            kw["format"] = value
        elif key == "workers":
            kw["workers"] = int(value)
        elif key == "deterministic":
            if value.lower() not in ("1", "true", "yes", "on"):
                raise ConfigError("deterministic ordering cannot be switched off")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(cfg, tolerances=tols, radii=radii, **kw)


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected a list of integers, got {text!r}") from None


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = apply_pairs(cfg, _read_pairs(Path(path)))
    return cfg


def resolve_precision(cfg: RunConfig, cli_prec: int | None) -> RunConfig:
    """Command-line ``--prec`` over the file; the environment variable over both."""
    prec = cfg.precision_digits if cli_prec is None else cli_prec
    env = os.environ.get(PREC_ENV)
    if env:
        try:
            prec = int(env)
        except ValueError:
            raise ConfigError(f"{PREC_ENV} must be an integer") from None
    return replace(cfg, precision_digits=prec)
