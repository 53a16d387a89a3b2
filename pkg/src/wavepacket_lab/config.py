"""Experiment configuration: a flat ``key = value`` text format with a fixed schema.

Lines starting with ``#`` and blank lines are ignored.  Values are parsed by the
field's type: integers, floats (``inf``, ``pi``, ``8*pi``, ``8pi`` and simple
fractions such as ``1/6`` are accepted), booleans, strings and comma-separated
lists.  Unknown keys are errors.  Resolution order is schema default, then the
experiment's own defaults, then the file, then command-line overrides.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENTS",
    "SCHEMA",
    "EXPERIMENT_DEFAULTS",
    "parse_config_text",
    "load_config",
    "schema_table",
]

EXPERIMENTS = (
    "partition-check",
    "dispersive-decay",
    "strichartz-mc",
    "longtime-decay",
    "khintchine-mc",
    "wavepacket-decompose",
    "bush-partition",
    "sqrt-cancel",
    "wp-norm",
    "nlw-energy",
    "increment-ledger",
    "cone-cover",
)

U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Validation failure; ``errors`` holds (field, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


_NUM = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi)?\s*$")


def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if "/" in t:
        a, b = t.split("/", 1)
        den = _float(b)
        if den == 0:
            raise ValueError("division by zero")
        return _float(a) / den
    m = _NUM.match(t)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ValueError(f"not a number: {text!r}")
    coef = float(m.group(1)) if m.group(1) is not None else 1.0
    return coef * math.pi if m.group(2) else coef


def _int(text: str) -> int:
    t = text.strip().replace("_", "")
    try:
        return int(t, 0)
    except ValueError:
        x = float(t)
        if not x.is_integer():
            raise ValueError(f"not an integer: {text!r}") from None
        return int(x)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(item: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)

    return parse


@dataclass(frozen=True)
class Field:
    name: str
    parse: Callable[[str], Any]
    default: Any
    doc: str


SCHEMA: dict[str, Field] = {
    f.name: f
    for f in [
        Field("experiment", str, "", "experiment name (must match the command line if given)"),
        Field("d", _int, 2, "spatial dimension, 1 to 4"),
        Field("n", _int, 256, "grid points per axis, a power of two (n <= 64 when d = 4)"),
        Field("L", _float, 8 * math.pi, "domain half-length; L >= 8 pi so the frequency spacing is <= 1/8"),
        Field("s", _float, 0.9, "Sobolev regularity of the random datum"),
        Field("delta", _float, 0.1, "cube side exponent, in (0, 1/4)"),
        Field("theta", _float, 1 / 6, "time-translate exponent, > 0"),
        Field("eta", _float, 1.0, "smallness constant, in (0, 1]"),
        Field("C_d", _float, 1.0, "amplitude-bin range constant, |m| <= C_d log N"),
        Field("c1_probe", _bool, False, "also record the top-band (C1) probe where the experiment supports it"),
        Field("bands", _list(_int), (4, 8, 16, 32), "frequency bands N (powers of two)"),
        Field("t_max", _float, 1.0, "time horizon"),
        Field("ensemble", _int, 32, "ensemble size (number of seeds)"),
        Field("seed", _int, 0, "base seed, unsigned 64-bit"),
        Field("out", str, "", "output directory (default runs/<experiment>)"),
        Field("law", str, "rademacher", "coefficient law: rademacher, gaussian or uniform"),
        Field("laws", _list(str), ("rademacher", "gaussian", "uniform"), "laws compared by khintchine-mc"),
        Field("q", _float, 2.0, "time exponent, >= 1 or inf"),
        Field("p", _float, 4.0, "space exponent, >= 1 or inf"),
        Field("ps", _list(_float), (2.0, 4.0, 8.0, 16.0), "moment orders"),
        Field("trials", _int, 100_000, "Monte Carlo trials"),
        Field("lengths", _list(_int), (4, 64, 256), "coefficient vector lengths"),
        Field("samples", _int, 100_000, "random sample points"),
        Field("M", _int, 1, "inner frequency scale of the refined projection"),
        Field("n_times", _int, 9, "time samples per window"),
        Field("T_ratios", _list(_float), (1.0, 2.0, 4.0, 8.0), "window starts T/N"),
        Field("R", _int, 32, "outer cone scale"),
        Field("sizes", _list(_int), (16, 64, 256), "bush sizes #B"),
        Field("instances", _int, 50, "random instances"),
        Field("dt_factor", _float, 8.0, "time step is h / dt_factor"),
        Field("radius", _float, 2.0, "radius of the compactly supported bump"),
        Field("amplitude", _float, 1.0, "datum amplitude"),
        Field("record_every", _int, 1, "keep every k-th solver step"),
        Field("checkpoint_every", _int, 0, "write a WPL1 checkpoint every k recorded samples (0 = none)"),
    ]
}

# per-experiment defaults, applied between the schema and the file
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "partition-check": {"samples": 100_000},
    "dispersive-decay": {"d": 2, "bands": (8, 16), "M": 1, "n_times": 9},
    "strichartz-mc": {"d": 2, "n": 1024, "L": 8 * math.pi, "s": 0.9, "bands": (4, 8, 16, 32), "ensemble": 64,
                      "q": 2.0, "p": 4.0, "radius": 2.0},
    "longtime-decay": {"d": 3, "n": 128, "L": 64.0, "bands": (2,), "ensemble": 32, "q": 2.0, "p": math.inf,
                       "radius": 1.25, "T_ratios": (1.0, 2.0, 4.0, 8.0)},
    "khintchine-mc": {"trials": 100_000},
    "wavepacket-decompose": {"d": 2, "n": 512, "L": 16 * math.pi, "bands": (16,)},
    "bush-partition": {"d": 2, "n": 512, "L": 8 * math.pi, "bands": (16,), "instances": 50},
    "sqrt-cancel": {"d": 2, "n": 512, "L": 8 * math.pi, "bands": (16,), "ensemble": 32, "sizes": (16, 64, 256)},
    "wp-norm": {"d": 2, "n": 128, "L": 8 * math.pi, "bands": (1, 2), "radius": 2.0, "law": "rademacher",
                "amplitude": 1.5},
    "nlw-energy": {"d": 2, "n": 256, "L": 16 * math.pi, "t_max": 1.0, "dt_factor": 8.0},
    "increment-ledger": {"d": 2, "n": 256, "L": 8 * math.pi, "bands": (2, 4, 8), "R": 8, "t_max": 8.0,
                         "record_every": 2, "law": "gaussian", "amplitude": 0.8, "seed": 11},
    "cone-cover": {"d": 2, "R": 32, "bands": (8, 16), "samples": 10_000},
}


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 2
    n: int = 256
    L: float = 8 * math.pi
    s: float = 0.9
    delta: float = 0.1
    theta: float = 1 / 6
    eta: float = 1.0
    C_d: float = 1.0
    c1_probe: bool = False
    bands: tuple = (4, 8, 16, 32)
    t_max: float = 1.0
    ensemble: int = 32
    seed: int = 0
    out: str = ""
    law: str = "rademacher"
    laws: tuple = ("rademacher", "gaussian", "uniform")
    q: float = 2.0
    p: float = 4.0
    ps: tuple = (2.0, 4.0, 8.0, 16.0)
    trials: int = 100_000
    lengths: tuple = (4, 64, 256)
    samples: int = 100_000
    M: int = 1
    n_times: int = 9
    T_ratios: tuple = (1.0, 2.0, 4.0, 8.0)
    R: int = 32
    sizes: tuple = (16, 64, 256)
    instances: int = 50
    dt_factor: float = 8.0
    radius: float = 2.0
    amplitude: float = 1.0
    record_every: int = 1
    checkpoint_every: int = 0
    source: str = field(default="", compare=False)

    def grid(self):
        from .spectral import GridSpec

        return GridSpec(self.d, self.n, self.L)

    @property
    def out_dir(self) -> Path:
        return Path(self.out or f"runs/{self.experiment}")

    def echo(self) -> dict:
        """Every parameter, verbatim, for the run manifest."""
        out = {}
        for f in fields(self):
            if f.name == "source":
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def validate(self) -> "ExperimentConfig":
        errs: list[tuple[str, str]] = []

        def bad(name: str, msg: str) -> None:
            errs.append((name, msg))

        if self.experiment not in EXPERIMENTS:
            bad("experiment", f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        if not 1 <= self.d <= 4:
            bad("d", f"must be in 1..4, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            bad("n", f"must be a power of two >= 8, got {self.n}")
        elif self.d == 4 and self.n > 64:
            bad("n", f"must be <= 64 when d = 4, got {self.n}")
        if not math.isfinite(self.L) or self.L <= 0:
            bad("L", f"must be positive and finite, got {self.L}")
        elif math.pi / self.L > 1 / 8 + 1e-12:
            bad("L", f"frequency spacing pi/L = {math.pi / self.L:.4g} exceeds 1/8; need L >= 8 pi")
        if not math.isfinite(self.s) or self.s < 0:
            bad("s", f"must be finite and >= 0, got {self.s}")
        if not 0 < self.delta < 0.25:
            bad("delta", f"must lie in (0, 1/4), got {self.delta}")
        if not (math.isfinite(self.theta) and self.theta > 0):
            bad("theta", f"must be > 0, got {self.theta}")
        if not 0 < self.eta <= 1:
            bad("eta", f"must lie in (0, 1], got {self.eta}")
        if not self.C_d > 0:
            bad("C_d", f"must be > 0, got {self.C_d}")
        for N in self.bands:
            if N < 1 or N & (N - 1):
                bad("bands", f"band {N} is not a power of two")
        if not self.t_max > 0:
            bad("t_max", f"must be > 0, got {self.t_max}")
        if self.ensemble < 1:
            bad("ensemble", f"must be >= 1, got {self.ensemble}")
        if not 0 <= self.seed <= U64_MAX:
            bad("seed", f"must be an unsigned 64-bit integer, got {self.seed}")
        laws = ("rademacher", "gaussian", "uniform")
        if self.law not in laws:
            bad("law", f"must be one of {laws}, got {self.law!r}")
        for lw in self.laws:
            if lw not in laws:
                bad("laws", f"unknown law {lw!r}")
        for name in ("q", "p"):
            v = getattr(self, name)
            if not v >= 1:
                bad(name, f"must be >= 1 or inf, got {v}")
        if any(not p >= 1 for p in self.ps):
            bad("ps", "moment orders must be >= 1")
        for name in ("trials", "samples", "instances", "n_times", "record_every", "R"):
            if getattr(self, name) < 1:
                bad(name, f"must be >= 1, got {getattr(self, name)}")
        if self.checkpoint_every < 0:
            bad("checkpoint_every", "must be >= 0")
        if any(n < 1 for n in self.lengths):
            bad("lengths", "lengths must be >= 1")
        if any(n < 1 for n in self.sizes):
            bad("sizes", "sizes must be >= 1")
        if any(not r > 0 for r in self.T_ratios):
            bad("T_ratios", "ratios must be > 0")
        if self.M < 1 or self.M & (self.M - 1):
            bad("M", f"must be a power of two, got {self.M}")
        if not self.dt_factor >= 4:
            bad("dt_factor", f"must be >= 4 (time step at most h/4), got {self.dt_factor}")
        if not self.radius > 0:
            bad("radius", f"must be > 0, got {self.radius}")
        if not self.amplitude > 0:
            bad("amplitude", f"must be > 0, got {self.amplitude}")
        if errs:
            raise ConfigError(errs)
        return self


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines into typed values (no defaults applied)."""
    out, errs = _parse(text)
    if errs:
        raise ConfigError(errs)
    return out


def _parse(text: str) -> tuple[dict[str, Any], list[tuple[str, str]]]:
    out: dict[str, Any] = {}
    errs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append((f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, val = (part.strip() for part in line.split("=", 1))
        spec = SCHEMA.get(key)
        if spec is None:
            errs.append((key, "unknown key"))
            continue
        if key in out:
            errs.append((key, f"duplicate key (line {lineno})"))
            continue
        try:
            out[key] = spec.parse(val)
        except (ValueError, TypeError) as exc:
            errs.append((key, str(exc)))
    return out, errs


def load_config(path: str | Path | None, experiment: str | None = None, **overrides) -> ExperimentConfig:
    """Resolve a configuration for ``experiment`` and validate it."""
    values: dict[str, Any] = {}
    parse_errs: list[tuple[str, str]] = []
    source = ""
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError([("config", f"cannot read {p}: {exc.strerror or exc}")]) from None
        values, parse_errs = _parse(text)
        source = str(p)
    name = experiment or values.get("experiment", "")
    if experiment and values.get("experiment") and values["experiment"] != experiment:
        raise ConfigError([("experiment", f"config names {values['experiment']!r} but {experiment!r} was requested")])
    if name not in EXPERIMENTS:
        raise ConfigError([("experiment", f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")])
    merged: dict[str, Any] = {k: f.default for k, f in SCHEMA.items()}
    merged.update(EXPERIMENT_DEFAULTS.get(name, {}))
    merged.update(values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged["experiment"] = name
    cfg = ExperimentConfig(**merged, source=source)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(parse_errs + exc.errors) from None
    if parse_errs:
        raise ConfigError(parse_errs)
    return cfg


def schema_table() -> str:
    """Markdown table of the schema, used by the documentation."""
    rows = ["| key | default | meaning |", "|---|---|---|"]
    for f in SCHEMA.values():
        d = f.default
        if isinstance(d, tuple):
            d = ",".join(str(x) for x in d)
        rows.append(f"| `{f.name}` | `{d}` | {f.doc} |")
    return "\n".join(rows)
