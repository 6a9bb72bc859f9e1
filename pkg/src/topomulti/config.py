"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment, lists are comma separated::

    problem = cantilever
    moduli = 1, 2, 5
    volfrac = 0.1667, 0.1667, 0.1667
    filter = sensitivity
    radius = 1.5          # in element edge lengths

Filter radii are given in multiples of the element size ``r_e``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .filtering import FILTER_KINDS, FilterConfig, ProjectionConfig
from .interpolation import MaterialSet, SchemeKind
from .problem import GEOMETRIES, OptimizationConfig, ProblemSpec


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line is not None else ""
        what = f"{key}: " if key is not None else ""
        super().__init__(f"{where}{what}{message}")
        self.key = key
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    moduli: tuple[float, ...]
    volfrac: tuple[float, ...]
    problem: str = "cantilever"
    nelx: int = 200
    nely: int = 100
    width: float = 2.0
    height: float = 1.0
    load: float = 0.1
    poisson: float = 0.3
    scheme: str = "pnorm_mapping"
    e_void: float = 1e-9
    p: float = 6.0
    n: float = 3.0
    delta: float = 1e-9
    filter: str = "sensitivity"
    radius: float = 1.5
    beta0: float = 2.0
    beta_period: int = 50
    beta_max: float = 64.0
    max_iters: int = 200
    tol_change: float = 0.01
    output: str = "out"
    vtk: bool = True

    def to_problem(self) -> ProblemSpec:
        return ProblemSpec(self.problem, self.nelx, self.nely, self.width, self.height, self.load, self.poisson)

    def to_optimization(self) -> OptimizationConfig:
        mats = MaterialSet(self.moduli, self.e_void, self.n, self.p, self.delta)
        r_e = self.width / self.nelx
        return OptimizationConfig(
            materials=mats,
            volfrac=self.volfrac,
            filter=FilterConfig(self.filter, self.radius * r_e),
            scheme=SchemeKind.parse(self.scheme),
            projection=ProjectionConfig(self.beta0, self.beta_period, self.beta_max),
            max_iters=self.max_iters,
            tol_change=self.tol_change,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _float_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(t) for t in items)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _positive(v):
    return v > 0


def _choice(options):
    return lambda v: v in options


# key -> (parser, validity check, message)
_FIELDS = {
    "problem": (str, _choice(GEOMETRIES), f"must be one of {', '.join(GEOMETRIES)}"),
    "nelx": (_int, lambda v: v >= 1, "must be >= 1"),
    "nely": (_int, lambda v: v >= 1, "must be >= 1"),
    "width": (float, _positive, "must be positive"),
    "height": (float, _positive, "must be positive"),
    "load": (float, lambda v: True, ""),
    "poisson": (float, lambda v: -1 < v < 0.5, "must lie in (-1, 0.5)"),
    "scheme": (str, _choice([s.value for s in SchemeKind] + ["pnorm", "simp"]), "unknown scheme"),
    "moduli": (_float_list, lambda v: all(e > 0 for e in v), "moduli must be positive"),
    "e_void": (float, _positive, "must be positive"),
    "p": (float, lambda v: v >= 1, "norm order must be >= 1"),
    "n": (float, lambda v: v >= 1, "penalization must be >= 1"),
    "delta": (float, _positive, "must be positive"),
    "filter": (str, _choice(FILTER_KINDS), f"must be one of {', '.join(FILTER_KINDS)}"),
    "radius": (float, _positive, "must be positive"),
    "beta0": (float, _positive, "must be positive"),
    "beta_period": (_int, lambda v: v >= 1, "must be >= 1"),
    "beta_max": (float, _positive, "must be positive"),
    "volfrac": (_float_list, lambda v: all(0 < f <= 1 for f in v), "fractions must lie in (0, 1]"),
    "max_iters": (_int, lambda v: v >= 1, "must be >= 1"),
    "tol_change": (float, _positive, "must be positive"),
    "output": (str, lambda v: bool(v), "must not be empty"),
    "vtk": (_bool, lambda v: True, ""),
}
KEYS = tuple(_FIELDS)


def parse_value(key, text, line=None):
    if key not in _FIELDS:
        raise ConfigError("unknown key", key, line)
    parser, ok, message = _FIELDS[key]
    try:
        value = parser(text.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text.strip()!r} ({exc})", key, line) from None
    if not ok(value):
        raise ConfigError(f"{message} (got {text.strip()})", key, line)
    return value


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse configuration text; ``overrides`` maps keys to raw value strings."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, _, value = (part.strip() for part in body.partition("="))
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno)
        values[key] = parse_value(key, value, lineno)
        lines[key] = lineno
    for key, value in (overrides or {}).items():
        values[key] = parse_value(key, value)
        lines[key] = None

    for key in ("moduli", "volfrac"):
        if key not in values:
            raise ConfigError("required key missing", key)
    cfg = RunConfig(**values)
    _cross_check(cfg, lines)
    return cfg


def _cross_check(cfg: RunConfig, lines):
    if len(cfg.volfrac) != len(cfg.moduli):
        raise ConfigError(
            f"{len(cfg.volfrac)} volume fractions for {len(cfg.moduli)} moduli", "volfrac", lines.get("volfrac")
        )
    if any(e <= cfg.e_void for e in cfg.moduli):
        raise ConfigError("every modulus must exceed e_void", "moduli", lines.get("moduli"))
    if cfg.beta_max < cfg.beta0:
        raise ConfigError("must be >= beta0", "beta_max", lines.get("beta_max"))
    try:
        cfg.to_problem()
    except ValueError as exc:
        # blame the mesh key written last; defaults have no line
        mesh = [k for k in ("nelx", "nely", "width", "height") if lines.get(k) is not None]
        key = max(mesh, key=lines.get) if mesh else "nely"
        raise ConfigError(str(exc), key, lines.get(key)) from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def format_config(cfg: RunConfig, header: str = "") -> str:
    """Canonical text form; ``parse_config(format_config(c)) == c``."""
    out = [f"# {line}" if line else "#" for line in header.splitlines()]
    for f in dataclasses.fields(cfg):
        out.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(out) + "\n"


def load_config(path, overrides=None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text, overrides)
    except ConfigError as exc:
        err = ConfigError(f"{path}: {exc}")
        err.key, err.line = exc.key, exc.line
        raise err from None
