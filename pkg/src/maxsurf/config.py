"""Run configurations for the command-line pipelines (TOML in, dataclasses out)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import PreconditionError
from .io import InputError, read_toml
from .pde import Circle, Dirichlet, Ellipse, Hole, PlanarDomain, PlanarRobin
from .perron import PerronSchedule


@dataclass(frozen=True)
class HoleConfig:
    shape: str
    center: tuple
    phi: float
    label: str = ""
    radius: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    angle: float = 0.0

    def curve(self):
        if self.shape == "circle":
            if self.radius is None:
                raise InputError(f"hole {self.label!r}: circle needs 'radius'")
            return Circle(tuple(self.center), float(self.radius))
        if self.shape == "ellipse":
            if self.a is None or self.b is None:
                raise InputError(f"hole {self.label!r}: ellipse needs 'a' and 'b'")
            return Ellipse(tuple(self.center), float(self.a), float(self.b), float(self.angle))
        raise InputError(f"hole {self.label!r}: unknown shape {self.shape!r}")


@dataclass(frozen=True)
class FarFieldConfig:
    """``mode = "planar"`` (fitted planar end) or ``"dirichlet"`` (constant ``value``)."""

    mode: str = "planar"
    harmonics: int = 4
    band: tuple = (0.35, 0.6)
    value: Optional[float] = None

    def closure(self):
        if self.mode == "planar":
            return PlanarRobin(int(self.harmonics), tuple(self.band))
        if self.mode == "dirichlet":
            if self.value is None:
                raise InputError("dirichlet far field needs 'value'")
            return Dirichlet(float(self.value))
        raise InputError(f"unknown far-field mode {self.mode!r}")


@dataclass(frozen=True)
class DomainConfig:
    R: float
    h: float
    holes: tuple
    center: Optional[tuple] = None

    def build(self, far_field) -> PlanarDomain:
        holes = tuple(Hole(hc.curve(), float(hc.phi), hc.label) for hc in self.holes)
        center = None if self.center is None else tuple(float(c) for c in self.center)
        return PlanarDomain(holes, float(self.R), float(self.h), far_field, center)


@dataclass(frozen=True)
class OracleConfig:
    enabled: bool = True
    agreement_tol: float = 1e-5
    tol: float = 1e-11
    max_iter: int = 60


@dataclass(frozen=True)
class LevelConfig:
    """Heights to classify; ``end_offsets`` are added to the fitted end height."""

    heights: tuple = ()
    end_offsets: tuple = ()


@dataclass(frozen=True)
class ClosedFormConfig:
    """Reference ``scale asinh(rho/scale) + shift`` around ``center``."""

    kind: str = "radial_catenoid"
    center: tuple = (0.0, 0.0)
    scale: float = 1.0
    shift: float = 0.0
    tol: float = 1e-3


@dataclass(frozen=True)
class SolveConfig:
    domain: DomainConfig
    far_field: FarFieldConfig = field(default_factory=FarFieldConfig)
    perron: PerronSchedule = field(default_factory=PerronSchedule)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    levels: LevelConfig = field(default_factory=LevelConfig)
    closed_form: Optional[ClosedFormConfig] = None
    name: str = "solve"

    def build_domain(self) -> PlanarDomain:
        return self.domain.build(self.far_field.closure())


def _record(cls, table, where):
    if not isinstance(table, dict):
        raise InputError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    extra = set(table) - names
    if extra:
        raise InputError(f"[{where}] unknown keys: {', '.join(sorted(extra))}")
    out = {}
    for k, v in table.items():
        if isinstance(v, list):
            v = tuple(v)
        if isinstance(v, float) and not math.isfinite(v):
            raise InputError(f"[{where}] {k} must be finite")
        out[k] = v
    try:
        return cls(**out)
    except (TypeError, PreconditionError) as e:
        raise InputError(f"[{where}] {e}") from e


def parse_solve_config(data: dict) -> SolveConfig:
    allowed = {"name", "domain", "far_field", "perron", "oracle", "levels", "closed_form"}
    extra = set(data) - allowed
    if extra:
        raise InputError(f"unknown sections: {', '.join(sorted(extra))}")
    if "domain" not in data:
        raise InputError("missing [domain] section")
    dom = dict(data["domain"])
    holes = dom.pop("holes", None)
    if not holes:
        raise InputError("[domain] needs at least one [[domain.holes]] entry")
    dom["holes"] = tuple(_record(HoleConfig, hc, f"domain.holes[{k}]") for k, hc in enumerate(holes))
    kw = {"domain": _record(DomainConfig, dom, "domain")}
    for key, cls in (("far_field", FarFieldConfig), ("perron", PerronSchedule), ("oracle", OracleConfig),
                     ("levels", LevelConfig), ("closed_form", ClosedFormConfig)):
        if key in data:
            kw[key] = _record(cls, data[key], key)
    if "name" in data:
        kw["name"] = str(data["name"])
    cfg = SolveConfig(**kw)
    _check_positive(cfg)
    return cfg


def _check_positive(cfg: SolveConfig):
    d = cfg.domain
    if not (d.R > 0 and d.h > 0):
        raise InputError("[domain] R and h must be positive")
    tols = [cfg.perron.tol, cfg.perron.local_tol, cfg.oracle.agreement_tol, cfg.oracle.tol]
    if cfg.closed_form is not None:
        tols.append(cfg.closed_form.tol)
    if not all(t > 0 for t in tols):
        raise InputError("all tolerances must be positive")


def load_solve_config(path) -> SolveConfig:
    return parse_solve_config(read_toml(path))
