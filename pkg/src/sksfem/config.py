"""Run configuration: flat ``key = value`` files with optional ``[section]`` headers.

Sections only group keys for readability; every key is global and unknown
keys are rejected.  Command-line flags override file values.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, asdict, replace
import hashlib
import json
import math

import numpy as np

__all__ = ["ConfigError", "RunConfig", "KINDS", "SECTIONS", "parse_config_text", "load_config",
           "validate", "u0_function", "format_config"]

KINDS = ("simulate", "convergence-time", "convergence-space", "stability", "holder",
         "exp-moment", "localized", "gronwall-check")

SECTIONS = {
    "run": ("kind", "seed", "out", "workers", "dump_matrices"),
    "space": ("L", "N", "r", "N_list", "N_ref"),
    "scheme": ("nu", "T", "M", "M_list", "M_ref", "newton_tol", "newton_max_iter", "u0", "u0_amp"),
    "model": ("model", "lam", "L0", "C_B"),
    "mc": ("mc", "q", "kappa", "gronwall_instances", "gronwall_samples", "gronwall_n"),
    "localization": ("beta", "ce"),
}

U0_CHOICES = ("sin", "sincos", "zero")


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``key`` and ``line`` locate the problem when known."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    kind: str = "simulate"
    seed: int = 1234
    out: str = "runs/out"
    workers: int = 1
    dump_matrices: bool = False
    L: float = 2 * math.pi
    N: int = 64
    r: int = 4
    N_list: tuple = (8, 16, 32, 64)
    N_ref: int = 256
    nu: float = 1.0
    T: float = 0.25
    M: int = 256
    M_list: tuple = (64, 128, 256, 512, 1024)
    M_ref: int = 8192
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    u0: str = "sin"
    u0_amp: float = 1.0
    model: str = "sin"
    lam: float = 0.5
    L0: float | None = None
    C_B: float | None = None
    mc: int = 64
    q: tuple = (0.5, 0.75)
    kappa: float | None = None
    gronwall_instances: int = 1000
    gronwall_samples: int = 400
    gronwall_n: int = 64
    beta: float = 0.5
    ce: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT_TUPLES = {"N_list", "M_list"}
_FLOAT_TUPLES = {"q"}
_OPTIONAL = {"L0", "C_B", "kappa"}


def _coerce(key: str, raw: str, line=None):
    raw = raw.strip()
    default = _FIELDS[key].default
    try:
        if key in _INT_TUPLES:
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if key in _FLOAT_TUPLES:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if key in _OPTIONAL:
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            if key == "L" and raw.lower() in ("2pi", "2*pi"):
                return 2 * math.pi
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r}", key=key, line=line) from None


def parse_config_text(text: str) -> dict:
    """Parse config text into a dict of typed values (not yet validated)."""
    values = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"malformed section header {stripped!r}", line=lineno)
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected key = value, got {stripped!r}", line=lineno)
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if section is not None and key not in SECTIONS[section]:
            raise ConfigError(f"key does not belong to section [{section}]", key=key, line=lineno)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        values[key] = _coerce(key, raw, lineno)
    return values


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: RunConfig) -> str:
    """Config text that parses back to ``cfg`` exactly."""
    d = asdict(cfg)
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_format_value(d[key])}" for key in keys)
        lines.append("")
    return "\n".join(lines)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELDS:
            raise ConfigError("unknown key", key=key)
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _pow2(n: int) -> bool:
    return n >= 1 and not n & (n - 1)


def _need(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(message, key=key)


def validate(cfg: RunConfig) -> RunConfig:
    """Check every downstream precondition; raises ``ConfigError`` naming the violated one."""
    _need(cfg.kind in KINDS, "kind", f"unknown experiment kind; choose from {list(KINDS)}")
    _need(cfg.r >= 4, "r", "order r must be >= 4 (H2-conforming splines require r >= 4)")
    _need(cfg.r <= 6, "r", "order r must be <= 6")
    _need(cfg.L > 0, "L", "domain length L must be positive")
    _need(cfg.N >= cfg.r, "N", "element count N must be >= r")
    _need(cfg.nu > 0, "nu", "viscosity nu must be positive")
    _need(cfg.T > 0, "T", "horizon T must be positive")
    _need(_pow2(cfg.M), "M", "step count M must be a power of two for dyadic path coupling")
    _need(cfg.M <= 2**24, "M", "step count M must not exceed 2**24")
    _need(cfg.mc >= 1, "mc", "Monte Carlo sample count must be >= 1")
    _need(cfg.workers >= 1, "workers", "worker count must be >= 1")
    _need(cfg.newton_tol > 0, "newton_tol", "Newton tolerance must be positive")
    _need(cfg.newton_max_iter >= 1, "newton_max_iter", "Newton iteration cap must be >= 1")
    _need(cfg.model in ("zero", "sin", "cos", "rational", "linear"), "model",
          "model must be one of zero, sin, cos, rational, linear")
    _need(cfg.u0 in U0_CHOICES, "u0", f"u0 must be one of {list(U0_CHOICES)}")
    _need(len(cfg.q) >= 1 and all(0 < q < 0.99 for q in cfg.q), "q",
          "every q must satisfy 0 < q < 99/100")
    _need(cfg.beta > 0, "beta", "beta must be positive")
    _need(cfg.ce > 0, "ce", "C_e must be positive")
    _need(cfg.kappa is None or cfg.kappa >= 0, "kappa", "kappa must be nonnegative")
    if cfg.kind == "convergence-time":
        _need(len(cfg.M_list) >= 3, "M_list", "rate fits need at least 3 step counts")
        _need(all(_pow2(m) for m in cfg.M_list), "M_list", "every M must be a power of two")
        _need(_pow2(cfg.M_ref) and cfg.M_ref <= 2**24, "M_ref", "M_ref must be a power of two <= 2**24")
        _need(cfg.M_ref >= 8 * max(cfg.M_list), "M_ref", "M_ref must be at least 8x the largest M")
    if cfg.kind in ("convergence-space", "localized"):
        _need(len(cfg.N_list) >= 3, "N_list", "rate fits need at least 3 element counts")
        _need(all(n >= cfg.r for n in cfg.N_list), "N_list", "every N must be >= r")
        _need(cfg.N_ref >= 4 * max(cfg.N_list), "N_ref", "N_ref must be at least 4x the largest N")
        _need(all(cfg.N_ref % n == 0 and _pow2(cfg.N_ref // n) for n in cfg.N_list), "N_list",
              "every N must be nested in N_ref (N_ref / N a power of two)")
    if cfg.kind == "holder":
        _need(_pow2(cfg.M_ref) and cfg.M_ref >= 16, "M_ref", "M_ref must be a power of two >= 16")
    if cfg.kind == "gronwall-check":
        _need(cfg.gronwall_instances >= 1, "gronwall_instances", "need at least one instance")
        _need(cfg.gronwall_n >= 1, "gronwall_n", "instance horizon must be >= 1")
        _need(cfg.gronwall_samples >= 2, "gronwall_samples", "need at least 2 samples per instance")
    return cfg


def u0_function(cfg: RunConfig):
    """Initial datum as a vectorized callable on ``[0, L)``."""
    a, w = cfg.u0_amp, 2 * math.pi / cfg.L
    if cfg.u0 == "sin":
        return lambda x: a * np.sin(w * x)
    if cfg.u0 == "sincos":
        return lambda x: a * (np.sin(w * x) + 0.3 * np.cos(2 * w * x))
    return lambda x: 0.0 * x
