"""Experiment configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .assembly import QuadratureConfig
from .mesh import DOMAINS

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "DEFAULT_RESOLUTION"]

DEFAULT_RESOLUTION = {"interval": 16, "square": 4, "lshape": 4, "disk": 24}
SOLVERS = ("auto", "dense", "iterative")
TABLES = (1, 2, 3, 4)
_INT_KEYS = ("k_max", "levels", "base_resolution", "budget_dofs", "reference_refinements")


class ConfigError(ValueError):
    """Invalid configuration; `line` is the 1-based line in the source file when known."""

    def __init__(self, message, line=None, source=None):
        where = f"{source}:{line}: " if (source and line) else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "interval"
    s: tuple = (0.5,)
    k_max: int = 1
    levels: int = 3
    base_resolution: int | None = None
    reference_refinements: int = 0
    quadrature: dict = field(default_factory=dict)
    solver: str = "auto"
    out: str | None = None
    deterministic: bool = False
    mesh_in: str | None = None
    mesh_out: str | None = None
    budget_dofs: int | None = None
    export_matrices: bool = False
    tables: tuple = TABLES

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(float(x) for x in (self.s if isinstance(self.s, (list, tuple)) else [self.s])))
        object.__setattr__(self, "tables", tuple(int(t) for t in self.tables))
        object.__setattr__(self, "quadrature", dict(self.quadrature))

    @property
    def resolution(self) -> int:
        return self.base_resolution if self.base_resolution is not None else DEFAULT_RESOLUTION[self.domain]

    def quad(self, dim: int) -> QuadratureConfig:
        return QuadratureConfig.for_dim(dim, **self.quadrature)

    def validate(self) -> "ExperimentConfig":
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}")

        if self.domain not in DOMAINS:
            bad("domain", f"must be one of {', '.join(DOMAINS)}, got {self.domain!r}")
        if not self.s:
            bad("s", "at least one fractional order is required")
        for x in self.s:
            if not (0.0 < x < 1.0) or math.isnan(x):
                bad("s", f"fractional order must lie in (0, 1), got {x!r}")
        for key in ("k_max", "levels"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        if self.base_resolution is not None and self.base_resolution < 1:
            bad("base_resolution", "must be >= 1")
        if self.reference_refinements < 0:
            bad("reference_refinements", "must be >= 0")
        if self.solver not in SOLVERS:
            bad("solver", f"must be one of {', '.join(SOLVERS)}")
        if self.budget_dofs is not None and self.budget_dofs < 1:
            bad("budget_dofs", "must be >= 1")
        allowed = {f.name for f in fields(QuadratureConfig)}
        for k in self.quadrature:
            if k not in allowed:
                bad(f"quadrature.{k}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for t in self.tables:
            if t not in TABLES:
                bad("tables", f"table ids are 1..4, got {t}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["s"] = list(self.s)
        d["tables"] = list(self.tables)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, source=None, text=None) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", _line_of(text, key), source)
        kinds = {
            "domain": str, "k_max": int, "levels": int, "base_resolution": (int, type(None)),
            "reference_refinements": int, "quadrature": dict, "solver": str, "out": (str, type(None)),
            "deterministic": bool, "mesh_in": (str, type(None)), "mesh_out": (str, type(None)),
            "budget_dofs": (int, type(None)), "export_matrices": bool, "s": (list, float, int), "tables": list,
        }
        for key, value in data.items():
            ok = isinstance(value, kinds[key])
            if key in _INT_KEYS or key == "s":
                ok = ok and not isinstance(value, bool)
            if not ok:
                raise ConfigError(f"{key}: unexpected type {type(value).__name__}", _line_of(text, key), source)
        try:
            return cls(**data).validate()
        except ConfigError as exc:
            key = str(exc).split(":")[0].split(".")[-1]
            raise ConfigError(str(exc), _line_of(text, key), source) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), None, source) from None

    def override(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, str(path)) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", 1, str(path))
    return ExperimentConfig.from_dict(data, str(path), text)
