"""Run configuration: JSON in, validated model out, canonical JSON back."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .benchmarks import BUILTINS, Benchmark
from .errors import AbsynthError, ConfigInvalid
from .geometry import Box, RegionSet
from .ltlf import atoms_of, parse
from .synthesis import Schedule
from .system import DisturbanceModel


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxCfg(_Model):
    lo: list[float]
    hi: list[float]

    @model_validator(mode="after")
    def _ordered(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("lo must not exceed hi")
        return self

    def box(self) -> Box:
        return Box(tuple(self.lo), tuple(self.hi))


class SystemCfg(_Model):
    name: Literal["thermal1d", "cart2d", "expander1d"]
    params: dict[str, float] = Field(default_factory=dict)
    lipschitz: Optional[float] = Field(default=None, gt=0)


class DisturbanceCfg(_Model):
    kind: Literal["uniform", "truncnorm"]
    support: BoxCfg
    mean: Optional[list[float]] = None
    std: Optional[list[float]] = None

    @model_validator(mode="after")
    def _gaussian_fields(self):
        if self.kind == "truncnorm" and (self.mean is None or self.std is None):
            raise ValueError("truncnorm needs mean and std")
        if self.std is not None and any(s <= 0 for s in self.std):
            raise ValueError("std entries must be positive")
        return self


class RegionCfg(_Model):
    label: str
    boxes: list[BoxCfg]


class RegionsCfg(_Model):
    x_abs: BoxCfg
    safe: list[BoxCfg]
    obstacles: list[BoxCfg] = Field(default_factory=list)
    labels: list[RegionCfg] = Field(default_factory=list)


class ScheduleCfg(_Model):
    counts: list[int]
    w_counts: list[int]
    factor: int = Field(default=2, ge=2)
    max_iterations: int = Field(default=8, ge=1)


class SimulationCfg(_Model):
    n: int = Field(default=10_000, ge=100)
    n_starts: int = Field(default=20, ge=1)
    starts: Optional[list[list[float]]] = None
    trajectories_csv: int = Field(default=20, ge=0)


class RunConfig(_Model):
    system: SystemCfg
    disturbance: Optional[DisturbanceCfg] = None
    regions: Optional[RegionsCfg] = None
    formula: Optional[str] = None
    horizon: Optional[int] = Field(default=None, ge=1)
    epsilon: float = Field(default=0.05, gt=0)
    schedule: Optional[ScheduleCfg] = None
    abstraction: Literal["smdp", "smdp-reduced", "imdp"] = "smdp"
    reach: Literal["auto", "lipschitz"] = "auto"
    seed: int = 0
    output: str = "out"
    designated: Optional[list[float]] = None
    simulation: SimulationCfg = Field(default_factory=SimulationCfg)

    @model_validator(mode="after")
    def _atoms_declared(self):
        if self.formula is None:
            return self
        f = parse(self.formula)
        if self.regions is not None:
            known = {"safe"} | {r.label for r in self.regions.labels}
        else:
            known = set(BUILTINS[self.system.name]().regions.atoms)
        missing = atoms_of(f) - known
        if missing:
            raise ValueError(f"formula atoms {sorted(missing)} are not region labels")
        return self


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def load_config(source) -> RunConfig:
    """``source`` is a path, a JSON string or a dict."""
    if isinstance(source, dict):
        data = source
    else:
        try:
            text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        except OSError as e:
            raise ConfigInvalid("<file>", str(e)) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigInvalid("<root>", f"not valid JSON: {e}") from None
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        path = _loc(err)
        if path == "<root>" and "formula" in err["msg"]:
            path = "formula"
        raise ConfigInvalid(path, err["msg"]) from None
    except AbsynthError as e:
        raise ConfigInvalid("formula", str(e)) from None


def canonical_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def config_schema() -> dict:
    return RunConfig.model_json_schema()


def regions_from_cfg(r: RegionsCfg) -> RegionSet:
    return RegionSet(
        regions=tuple((reg.label, tuple(b.box() for b in reg.boxes)) for reg in r.labels),
        safe=tuple(b.box() for b in r.safe),
        obstacles=tuple(b.box() for b in r.obstacles),
    )


def regions_to_cfg(regions: RegionSet, x_abs: Box) -> dict:
    d = regions.to_dict()
    return {"x_abs": x_abs.to_dict(), "safe": d["safe"], "obstacles": d["obstacles"], "labels": d["regions"]}


def resolve(cfg: RunConfig) -> Benchmark:
    """Builtin benchmark with every block of ``cfg`` that is present applied on top."""
    params = dict(cfg.system.params)
    if "n_headings" in params:
        params["n_headings"] = int(params["n_headings"])
    if cfg.system.lipschitz is not None:
        params["lipschitz"] = cfg.system.lipschitz
    try:
        b = BUILTINS[cfg.system.name](**params)
    except TypeError as e:
        raise ConfigInvalid("system.params", str(e)) from None
    dist = b.disturbance
    if cfg.disturbance is not None:
        d = cfg.disturbance
        dist = DisturbanceModel(d.support.box(), d.kind, tuple(d.mean or ()), tuple(d.std or ()))
    regions, x_abs = b.regions, b.x_abs
    if cfg.regions is not None:
        regions, x_abs = regions_from_cfg(cfg.regions), cfg.regions.x_abs.box()
    counts, w_counts = b.counts, b.w_counts
    if cfg.schedule is not None:
        counts, w_counts = tuple(cfg.schedule.counts), tuple(cfg.schedule.w_counts)
    if len(counts) != x_abs.dim or len(w_counts) != dist.dim:
        raise ConfigInvalid("schedule", "grid counts do not match the state/disturbance dimension")
    designated = tuple(cfg.designated) if cfg.designated is not None else b.designated
    return Benchmark(b.dynamics, dist, regions, x_abs, counts, w_counts, cfg.formula or b.formula,
                     cfg.horizon or b.horizon, designated)


def schedule_of(cfg: RunConfig, bench: Benchmark) -> Schedule:
    s = cfg.schedule
    return Schedule(bench.counts, bench.w_counts, s.factor if s else 2, s.max_iterations if s else 8)
